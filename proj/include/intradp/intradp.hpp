#pragma once

#include "error.hpp"
#include "units.hpp"
#include "graph.hpp"
#include "profile.hpp"
#include "kernels.hpp"
#include "plan.hpp"
#include "solver.hpp"
#include "plan_table.hpp"
#include "sim.hpp"
#include "models.hpp"
#include "report.hpp"
#include "wire.hpp"
#include "net.hpp"
#include "runtime.hpp"
