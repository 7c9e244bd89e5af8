#pragma once

#include "gmmssl/cluster.hpp"
#include "gmmssl/error.hpp"
#include "gmmssl/harness.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/mixture.hpp"
#include "gmmssl/objectives.hpp"
#include "gmmssl/optimizer.hpp"
#include "gmmssl/random.hpp"
#include "gmmssl/scenarios.hpp"
#include "gmmssl/subspace.hpp"
