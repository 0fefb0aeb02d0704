#pragma once

#include "gazesyn/nn/adam.hpp"
#include "gazesyn/nn/layers.hpp"
#include "gazesyn/nn/loss.hpp"
#include "gazesyn/nn/network.hpp"
#include "gazesyn/nn/tensor.hpp"
#include "gazesyn/nn/weights_io.hpp"
