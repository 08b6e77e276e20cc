#pragma once

#include "ionres/errors.hpp"
#include "ionres/hilbert.hpp"
#include "ionres/integrator.hpp"
#include "ionres/liouvillian.hpp"
#include "ionres/pointer.hpp"
#include "ionres/vibronic.hpp"
#include "ionres/scenario.hpp"
#include "ionres/audit.hpp"
