#pragma once

#include "fdnet/error.hpp"
#include "fdnet/fdm.hpp"
#include "fdnet/io.hpp"
#include "fdnet/limits.hpp"
#include "fdnet/mc.hpp"
#include "fdnet/netgen.hpp"
#include "fdnet/parallel.hpp"
#include "fdnet/rng.hpp"
#include "fdnet/sar.hpp"
#include "fdnet/stats.hpp"
