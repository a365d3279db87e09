#pragma once

#include "recatom/asymptotics.hpp"
#include "recatom/be_exact.hpp"
#include "recatom/distributions.hpp"
#include "recatom/estimators.hpp"
#include "recatom/experiment.hpp"
#include "recatom/normal.hpp"
#include "recatom/record_engine.hpp"
#include "recatom/rng.hpp"
#include "recatom/version.hpp"
