#pragma once

// Umbrella header: the full charge-qubit/resonator simulation stack.

#include "qed/errors.hpp"
#include "qed/params.hpp"
#include "qed/operators.hpp"
#include "qed/spectrum.hpp"
#include "qed/ode.hpp"
#include "qed/lindblad.hpp"
#include "qed/mcwf.hpp"
#include "qed/squeezing.hpp"
#include "qed/io.hpp"
