#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "taml/rng.hpp"
#include "taml/tasks/classification.hpp"
#include "taml/tasks/navigation.hpp"
#include "taml/tasks/omniglot.hpp"
#include "taml/tasks/sinusoid.hpp"

namespace taml::tasks {

using Task = std::variant<ClassificationTask, RegressionTask, NavigationTask>;

struct OmniglotSource {
  std::shared_ptr<const omniglot::Dataset> dataset;
  omniglot::EpisodeSpec episode;
};

using Distribution = std::variant<SyntheticSpec, SinusoidSpec, NavigationSpec, OmniglotSource>;

inline Task sample_task(const Distribution& dist, Rng& rng) {
  return std::visit(
      [&](const auto& d) -> Task {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, SyntheticSpec>) {
          return synthetic_classification_task(d, rng);
        } else if constexpr (std::is_same_v<D, SinusoidSpec>) {
          return sinusoid_task(d, rng);
        } else if constexpr (std::is_same_v<D, NavigationSpec>) {
          return navigation_task(d, rng);
        } else {
          if (!d.dataset) throw std::invalid_argument("sample_task: omniglot source has no dataset");
          return omniglot::sample_episode(*d.dataset, d.episode, rng);
        }
      },
      dist);
}

/// M tasks drawn in order from one generator.
inline std::vector<Task> sample_task_batch(const Distribution& dist, std::size_t m, Rng& rng) {
  if (m == 0) throw std::invalid_argument("sample_task_batch: batch size must be >= 1");
  std::vector<Task> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(sample_task(dist, rng));
  return out;
}

}  // namespace taml::tasks
