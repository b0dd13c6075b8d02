#pragma once

// Umbrella header.

#include "pi0kit/distributions.hpp"
#include "pi0kit/epv.hpp"
#include "pi0kit/errors.hpp"
#include "pi0kit/estimators.hpp"
#include "pi0kit/io.hpp"
#include "pi0kit/rng.hpp"
#include "pi0kit/simulation.hpp"
#include "pi0kit/testing.hpp"
