#pragma once

#include "mpca/error.hpp"
#include "mpca/tensor.hpp"
#include "mpca/random.hpp"
#include "mpca/spiked_model.hpp"
#include "mpca/linalg.hpp"
#include "mpca/covariance.hpp"
#include "mpca/estimator.hpp"
#include "mpca/debias.hpp"
#include "mpca/inference.hpp"
#include "mpca/tensor_csv.hpp"
#include "mpca/simulate.hpp"
#include "mpca/analyze.hpp"
