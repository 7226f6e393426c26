#pragma once

#include "rfsep/adam.hpp"
#include "rfsep/datagen.hpp"
#include "rfsep/dsp.hpp"
#include "rfsep/error.hpp"
#include "rfsep/eval.hpp"
#include "rfsep/grad_check.hpp"
#include "rfsep/ops.hpp"
#include "rfsep/rng.hpp"
#include "rfsep/tensor.hpp"
#include "rfsep/train.hpp"
#include "rfsep/wavenet.hpp"
