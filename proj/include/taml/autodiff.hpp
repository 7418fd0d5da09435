#pragma once

#include "taml/autodiff/backward.hpp"
#include "taml/autodiff/gradcheck.hpp"
#include "taml/autodiff/matrix.hpp"
#include "taml/autodiff/tape.hpp"
