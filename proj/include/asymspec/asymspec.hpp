#pragma once

#include "canonical.hpp"
#include "cli.hpp"
#include "consensus.hpp"
#include "errors.hpp"
#include "filterdesign.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "netmodel.hpp"
