#pragma once

// Grand-canonical loop-soup toolkit for the repulsive Bose gas:
// discretized Brownian loops, interaction energies, reference samplers,
// boundary-condition Markov kernels, and the statistical verification layer.

#include "loopsoup/errors.hpp"
#include "loopsoup/vec.hpp"
#include "loopsoup/time_grid.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/bridge.hpp"
#include "loopsoup/excursion.hpp"
#include "loopsoup/potential.hpp"
#include "loopsoup/energy.hpp"
#include "loopsoup/stats.hpp"
#include "loopsoup/measure.hpp"
#include "loopsoup/chain.hpp"
#include "loopsoup/kernels.hpp"
#include "loopsoup/verify.hpp"
#include "loopsoup/io.hpp"
