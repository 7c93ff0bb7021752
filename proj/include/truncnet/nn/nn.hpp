#pragma once

#include "truncnet/nn/activation.hpp"
#include "truncnet/nn/containers.hpp"
#include "truncnet/nn/conv.hpp"
#include "truncnet/nn/linear.hpp"
#include "truncnet/nn/module.hpp"
#include "truncnet/nn/norm.hpp"
#include "truncnet/nn/pooling.hpp"
#include "truncnet/nn/squeeze_excite.hpp"
