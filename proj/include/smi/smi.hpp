#pragma once

#include "smi/channel.hpp"
#include "smi/collectives.hpp"
#include "smi/comm.hpp"
#include "smi/config.hpp"
#include "smi/errors.hpp"
#include "smi/packet.hpp"
#include "smi/ports.hpp"
#include "smi/routing.hpp"
#include "smi/runtime.hpp"
#include "smi/topology.hpp"
#include "smi/trace.hpp"
#include "smi/transport.hpp"
