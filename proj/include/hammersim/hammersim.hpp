#pragma once

#include "hammersim/common.hpp"
#include "hammersim/timing.hpp"
#include "hammersim/channel.hpp"
#include "hammersim/fl.hpp"
#include "hammersim/adversary.hpp"
#include "hammersim/policy.hpp"
#include "hammersim/memmap.hpp"
#include "hammersim/dram.hpp"
#include "hammersim/metrics.hpp"
#include "hammersim/config.hpp"
#include "hammersim/attack.hpp"
#include "hammersim/harness.hpp"
