// Umbrella header.
#pragma once

#include "concont/common.hpp"
#include "concont/consistency.hpp"
#include "concont/controller.hpp"
#include "concont/dataset.hpp"
#include "concont/evalkit.hpp"
#include "concont/network.hpp"
#include "concont/trainer.hpp"
#include "concont/cli.hpp"
