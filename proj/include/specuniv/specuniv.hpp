#pragma once

#include "specuniv/core.hpp"
#include "specuniv/laws.hpp"
#include "specuniv/linalg.hpp"
#include "specuniv/model.hpp"
#include "specuniv/params.hpp"
#include "specuniv/freeprob.hpp"
#include "specuniv/cumulants.hpp"
#include "specuniv/bounds.hpp"
#include "specuniv/harness.hpp"
#include "specuniv/io.hpp"
#include "specuniv/experiments.hpp"
#include "specuniv/cli.hpp"
