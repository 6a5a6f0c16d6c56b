#pragma once

#include "mvlab/harness/config.hpp"
#include "mvlab/harness/models.hpp"
#include "mvlab/harness/run.hpp"
#include "mvlab/harness/strict_json.hpp"
#include "mvlab/harness/table.hpp"
