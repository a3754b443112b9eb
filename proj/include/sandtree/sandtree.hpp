#pragma once

#include "sandtree/animals.hpp"
#include "sandtree/errors.hpp"
#include "sandtree/exact.hpp"
#include "sandtree/experiments.hpp"
#include "sandtree/ratio.hpp"
#include "sandtree/report.hpp"
#include "sandtree/rng.hpp"
#include "sandtree/sandpile.hpp"
#include "sandtree/stats.hpp"
#include "sandtree/transfer.hpp"
#include "sandtree/tree.hpp"
#include "sandtree/tree_json.hpp"
