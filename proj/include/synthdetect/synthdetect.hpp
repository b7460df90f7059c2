#pragma once

#include "synthdetect/augment.hpp"
#include "synthdetect/checkpoint.hpp"
#include "synthdetect/config.hpp"
#include "synthdetect/dataset.hpp"
#include "synthdetect/error.hpp"
#include "synthdetect/eval.hpp"
#include "synthdetect/experiment.hpp"
#include "synthdetect/features.hpp"
#include "synthdetect/image.hpp"
#include "synthdetect/layers.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/ops.hpp"
#include "synthdetect/optim.hpp"
#include "synthdetect/png_io.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/svm.hpp"
#include "synthdetect/synthetic.hpp"
#include "synthdetect/tensor.hpp"
