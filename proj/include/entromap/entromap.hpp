#pragma once

#include "entromap/baseline.hpp"
#include "entromap/bench.hpp"
#include "entromap/core.hpp"
#include "entromap/errors.hpp"
#include "entromap/io.hpp"
#include "entromap/map.hpp"
#include "entromap/parallel.hpp"
#include "entromap/sinkhorn.hpp"
