#pragma once

#include "pcm/counterfactual.hpp"
#include "pcm/domain.hpp"
#include "pcm/error.hpp"
#include "pcm/grid.hpp"
#include "pcm/merge1d.hpp"
#include "pcm/metrics.hpp"
#include "pcm/pipeline.hpp"
#include "pcm/precluster.hpp"
#include "pcm/refine.hpp"
#include "pcm/rng.hpp"
#include "pcm/synthgen.hpp"

#define PCM_VERSION "0.1.0"
