#pragma once

// Umbrella header.

#include "relgan/checkpoint.hpp"
#include "relgan/cli.hpp"
#include "relgan/config.hpp"
#include "relgan/data.hpp"
#include "relgan/gradcheck.hpp"
#include "relgan/losses.hpp"
#include "relgan/metrics.hpp"
#include "relgan/nn.hpp"
#include "relgan/optim.hpp"
#include "relgan/rng.hpp"
#include "relgan/svg.hpp"
#include "relgan/tape.hpp"
#include "relgan/tensor.hpp"
#include "relgan/trainer.hpp"
