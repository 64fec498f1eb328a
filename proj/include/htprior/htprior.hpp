#pragma once

#include "htprior/autograd.hpp"
#include "htprior/block.hpp"
#include "htprior/checkpoint.hpp"
#include "htprior/common.hpp"
#include "htprior/config.hpp"
#include "htprior/conv.hpp"
#include "htprior/dataset.hpp"
#include "htprior/detector.hpp"
#include "htprior/evaluation.hpp"
#include "htprior/gradcheck.hpp"
#include "htprior/hough.hpp"
#include "htprior/model.hpp"
#include "htprior/optim.hpp"
#include "htprior/pgm.hpp"
#include "htprior/tensor.hpp"
#include "htprior/train.hpp"
