#pragma once

#include "autodiff.hpp"
#include "bench.hpp"
#include "cheb.hpp"
#include "config.hpp"
#include "data_tu.hpp"
#include "dense.hpp"
#include "eigen.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "harness.hpp"
#include "layers.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "pattern.hpp"
#include "rng.hpp"
#include "sparse.hpp"
