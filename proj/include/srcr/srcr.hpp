#pragma once

// Umbrella header: the whole library in one include.

#include "srcr/checkpoint.hpp"
#include "srcr/dataset.hpp"
#include "srcr/errors.hpp"
#include "srcr/hsl.hpp"
#include "srcr/hypergraph.hpp"
#include "srcr/mat.hpp"
#include "srcr/metrics.hpp"
#include "srcr/mlp.hpp"
#include "srcr/pipeline.hpp"
#include "srcr/rce.hpp"
#include "srcr/report.hpp"
#include "srcr/rng.hpp"
#include "srcr/tensor.hpp"
