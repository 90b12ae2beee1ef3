#pragma once

#include "dctnet/adam.hpp"
#include "dctnet/autograd.hpp"
#include "dctnet/checkpoint.hpp"
#include "dctnet/click_encoding.hpp"
#include "dctnet/datasets.hpp"
#include "dctnet/error.hpp"
#include "dctnet/eval.hpp"
#include "dctnet/feature_dct.hpp"
#include "dctnet/interactive.hpp"
#include "dctnet/png_io.hpp"
#include "dctnet/raster.hpp"
#include "dctnet/robot_user.hpp"
#include "dctnet/segnet.hpp"
#include "dctnet/session.hpp"
#include "dctnet/tensor.hpp"
#include "dctnet/trainer.hpp"
