#pragma once

#include "error.hpp"
#include "netgraph.hpp"
#include "numkernel.hpp"
#include "bayes.hpp"
#include "spectral.hpp"
#include "simkit.hpp"
#include "router.hpp"
