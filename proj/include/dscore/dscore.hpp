#pragma once

#include "dscore/augment.hpp"
#include "dscore/dataset.hpp"
#include "dscore/errors.hpp"
#include "dscore/experiment.hpp"
#include "dscore/kernels.hpp"
#include "dscore/model.hpp"
#include "dscore/parallel.hpp"
#include "dscore/region.hpp"
#include "dscore/region_grid.hpp"
#include "dscore/report.hpp"
#include "dscore/scoring.hpp"
#include "dscore/tensor.hpp"
#include "dscore/train.hpp"
#include "dscore/transform.hpp"
#include "dscore/weights.hpp"
