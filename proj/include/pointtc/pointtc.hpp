#pragma once

#include "channel.hpp"
#include "checkpoint.hpp"
#include "cloud_io.hpp"
#include "config.hpp"
#include "decoder.hpp"
#include "encoder.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "harness.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "modulator.hpp"
#include "nn.hpp"
#include "optim.hpp"
#include "random.hpp"
#include "rate_allocator.hpp"
#include "tensor.hpp"
#include "tokenizer.hpp"
