#pragma once

#include "featedit/box_regression.hpp"
#include "featedit/channel_stats.hpp"
#include "featedit/detection_eval.hpp"
#include "featedit/edit.hpp"
#include "featedit/feature_io.hpp"
#include "featedit/linear_models.hpp"
#include "featedit/pca.hpp"
#include "featedit/pipeline.hpp"
#include "featedit/synth.hpp"
#include "featedit/types.hpp"
