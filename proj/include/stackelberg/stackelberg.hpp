#ifndef STACKELBERG_STACKELBERG_HPP
#define STACKELBERG_STACKELBERG_HPP

#include "stackelberg/common.hpp"
#include "stackelberg/equilibrium.hpp"
#include "stackelberg/gp.hpp"
#include "stackelberg/gp_fit.hpp"
#include "stackelberg/harness.hpp"
#include "stackelberg/leader.hpp"
#include "stackelberg/ridehail_game.hpp"

#endif  // STACKELBERG_STACKELBERG_HPP
