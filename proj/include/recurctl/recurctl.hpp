#pragma once

#include "recurctl/weyl.hpp"
#include "recurctl/lie.hpp"
#include "recurctl/fock.hpp"
#include "recurctl/spectrum.hpp"
#include "recurctl/propagator.hpp"
#include "recurctl/recurrence.hpp"
#include "recurctl/synthesizer.hpp"
#include "recurctl/oscillators.hpp"
#include "recurctl/io.hpp"
