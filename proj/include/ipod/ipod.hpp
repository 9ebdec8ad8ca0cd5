#pragma once

#include "ipod/errors.hpp"
#include "ipod/fhn.hpp"
#include "ipod/incremental_svd.hpp"
#include "ipod/io.hpp"
#include "ipod/oracle.hpp"
#include "ipod/perturbation.hpp"
#include "ipod/small_svd.hpp"
#include "ipod/weighted_linalg.hpp"
