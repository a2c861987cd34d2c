#pragma once

#include "fdd/adam.hpp"
#include "fdd/autodiff.hpp"
#include "fdd/checkpoint.hpp"
#include "fdd/corpus.hpp"
#include "fdd/critics.hpp"
#include "fdd/dae.hpp"
#include "fdd/disturbance.hpp"
#include "fdd/error.hpp"
#include "fdd/features.hpp"
#include "fdd/gradcam.hpp"
#include "fdd/harness.hpp"
#include "fdd/hash.hpp"
#include "fdd/image.hpp"
#include "fdd/io/binary.hpp"
#include "fdd/io/feature_file.hpp"
#include "fdd/io/json_report.hpp"
#include "fdd/io/png.hpp"
#include "fdd/kernels.hpp"
#include "fdd/pipeline.hpp"
#include "fdd/rng.hpp"
#include "fdd/tensor.hpp"
