#pragma once

#include "everbot/bus.hpp"
#include "everbot/error.hpp"
#include "everbot/geometry.hpp"
#include "everbot/io.hpp"
#include "everbot/random.hpp"
#include "everbot/registration.hpp"
#include "everbot/sensing.hpp"
#include "everbot/telemetry.hpp"
#include "everbot/uncertainty.hpp"
