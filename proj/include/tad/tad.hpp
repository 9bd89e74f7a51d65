#pragma once

#include <tad/autodiff.hpp>
#include <tad/common.hpp>
#include <tad/config.hpp>
#include <tad/corpus.hpp>
#include <tad/eval.hpp>
#include <tad/gan.hpp>
#include <tad/gan_train.hpp>
#include <tad/io.hpp>
#include <tad/mmd.hpp>
#include <tad/nn.hpp>
#include <tad/ood.hpp>
#include <tad/pipeline.hpp>
#include <tad/rng.hpp>
#include <tad/stats.hpp>
#include <tad/synthetic.hpp>
