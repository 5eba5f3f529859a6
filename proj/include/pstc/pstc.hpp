#pragma once

#include "pstc/linalg.hpp"
#include "pstc/setcalc.hpp"
#include "pstc/sysmodel.hpp"
#include "pstc/reach.hpp"
#include "pstc/estimator.hpp"
#include "pstc/trigger.hpp"
#include "pstc/problem.hpp"
#include "pstc/closed_loop.hpp"
#include "pstc/config.hpp"
#include "pstc/table_io.hpp"
#include "pstc/trace_io.hpp"
#include "pstc/sampling.hpp"
#include "pstc/validate.hpp"
