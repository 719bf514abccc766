#pragma once

#include "fairdiff/audit.hpp"
#include "fairdiff/bias_metrics.hpp"
#include "fairdiff/conditional_model.hpp"
#include "fairdiff/config.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/experiments.hpp"
#include "fairdiff/io.hpp"
#include "fairdiff/mixture.hpp"
#include "fairdiff/quadrature.hpp"
#include "fairdiff/rng.hpp"
#include "fairdiff/sde.hpp"
