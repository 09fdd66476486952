#ifndef REGIONAL_REGIONAL_HPP
#define REGIONAL_REGIONAL_HPP

#include "regional/concentration.hpp"
#include "regional/errors.hpp"
#include "regional/experiment.hpp"
#include "regional/forms.hpp"
#include "regional/functionals.hpp"
#include "regional/model.hpp"
#include "regional/parallel.hpp"
#include "regional/solver.hpp"

#endif  // REGIONAL_REGIONAL_HPP
