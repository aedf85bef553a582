#pragma once

#include "kstone/error.hpp"
#include "kstone/rng.hpp"
#include "kstone/parallel.hpp"
#include "kstone/dataset.hpp"
#include "kstone/patching.hpp"
#include "kstone/features.hpp"
#include "kstone/learners/tree.hpp"
#include "kstone/learners/ensemble.hpp"
#include "kstone/learners/model_io.hpp"
#include "kstone/learners/presets.hpp"
#include "kstone/evaluation/metrics.hpp"
#include "kstone/evaluation/folds.hpp"
#include "kstone/evaluation/cross_validate.hpp"
#include "kstone/evaluation/pca.hpp"
#include "kstone/evaluation/ablation.hpp"
#include "kstone/evaluation/report_io.hpp"
#include "kstone/synthcorpus.hpp"
