#pragma once

#include "geohj/error.hpp"
#include "geohj/config.hpp"
#include "geohj/fixture.hpp"
#include "geohj/manifold.hpp"
#include "geohj/lagrangian.hpp"
#include "geohj/action.hpp"
#include "geohj/parallel.hpp"
#include "geohj/measure_transport.hpp"
#include "geohj/relaxed_duality.hpp"
#include "geohj/hj_grid.hpp"
#include "geohj/functionals.hpp"
#include "geohj/doubling.hpp"
#include "geohj/io.hpp"
#include "geohj/verify.hpp"
