#pragma once

#include "kmono/conjecture.hpp"
#include "kmono/estimators.hpp"
#include "kmono/experiments.hpp"
#include "kmono/grenander.hpp"
#include "kmono/interp.hpp"
#include "kmono/inversion.hpp"
#include "kmono/limit.hpp"
#include "kmono/mixture.hpp"
#include "kmono/piecewise_poly.hpp"
#include "kmono/processes.hpp"
#include "kmono/random.hpp"
