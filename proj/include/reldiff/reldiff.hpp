#pragma once

#include "reldiff/core.hpp"
#include "reldiff/geometry.hpp"
#include "reldiff/rng.hpp"
#include "reldiff/trajectory.hpp"
#include "reldiff/minkowski.hpp"
#include "reldiff/schwarzschild.hpp"
#include "reldiff/frame_bundle.hpp"
#include "reldiff/stats.hpp"
#include "reldiff/montecarlo.hpp"
#include "reldiff/io.hpp"
#include "reldiff/checks.hpp"
