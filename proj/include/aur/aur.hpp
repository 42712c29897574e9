#pragma once

#include "aur/acquisition.hpp"
#include "aur/design.hpp"
#include "aur/env_builder.hpp"
#include "aur/environments.hpp"
#include "aur/errors.hpp"
#include "aur/gp.hpp"
#include "aur/harness.hpp"
#include "aur/io.hpp"
#include "aur/monte_carlo.hpp"
#include "aur/policy.hpp"
#include "aur/ppo.hpp"
#include "aur/rng.hpp"
#include "aur/stats.hpp"
#include "aur/virtual_env.hpp"
