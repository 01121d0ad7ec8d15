#pragma once

#include "preflab/grad.hpp"
#include "preflab/random.hpp"
#include "preflab/tiny_lm.hpp"
#include "preflab/pref_data.hpp"
#include "preflab/objectives.hpp"
#include "preflab/scoring.hpp"
#include "preflab/fpa.hpp"
#include "preflab/diagnostics.hpp"
#include "preflab/evaluation.hpp"
#include "preflab/train.hpp"
#include "preflab/run_config.hpp"
#include "preflab/pipeline.hpp"
