#pragma once

#include "quadvar/dependence_models.hpp"
#include "quadvar/errors.hpp"
#include "quadvar/experiment.hpp"
#include "quadvar/longrun.hpp"
#include "quadvar/matrix.hpp"
#include "quadvar/parallel.hpp"
#include "quadvar/quadform.hpp"
#include "quadvar/rng.hpp"
#include "quadvar/spectral.hpp"
