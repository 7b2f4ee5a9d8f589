#pragma once

#include "rffnet/commands.hpp"
#include "rffnet/config.hpp"
#include "rffnet/dataio.hpp"
#include "rffnet/eigen.hpp"
#include "rffnet/errors.hpp"
#include "rffnet/kernel_analysis.hpp"
#include "rffnet/matrix.hpp"
#include "rffnet/network.hpp"
#include "rffnet/optimizer.hpp"
#include "rffnet/random.hpp"
#include "rffnet/rff_layer.hpp"
#include "rffnet/serialize.hpp"
