#pragma once

#include "ringtrain/collectives.hpp"
#include "ringtrain/dataset.hpp"
#include "ringtrain/engine.hpp"
#include "ringtrain/errors.hpp"
#include "ringtrain/flat_buffer.hpp"
#include "ringtrain/harness/calibration.hpp"
#include "ringtrain/harness/compute.hpp"
#include "ringtrain/harness/experiments.hpp"
#include "ringtrain/harness/report.hpp"
#include "ringtrain/harness/thermal.hpp"
#include "ringtrain/model.hpp"
#include "ringtrain/net_profile.hpp"
#include "ringtrain/probe.hpp"
#include "ringtrain/profile.hpp"
#include "ringtrain/schedule.hpp"
#include "ringtrain/sim_transport.hpp"
#include "ringtrain/tcp_transport.hpp"
#include "ringtrain/tensor.hpp"
#include "ringtrain/transport.hpp"
#include "ringtrain/wire.hpp"
