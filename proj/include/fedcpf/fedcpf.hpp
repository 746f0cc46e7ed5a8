#pragma once

#include "fedcpf/baselines.hpp"
#include "fedcpf/data.hpp"
#include "fedcpf/errors.hpp"
#include "fedcpf/experiment.hpp"
#include "fedcpf/federation.hpp"
#include "fedcpf/gradcheck.hpp"
#include "fedcpf/harness.hpp"
#include "fedcpf/mask_upgrade.hpp"
#include "fedcpf/metrics.hpp"
#include "fedcpf/model.hpp"
#include "fedcpf/param.hpp"
#include "fedcpf/protocol.hpp"
#include "fedcpf/state.hpp"
