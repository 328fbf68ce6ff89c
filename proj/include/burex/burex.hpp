#pragma once

// Everything except the network client (burex/llm_client.hpp), which needs cpp-httplib.

#include "burex/adapter_math.hpp"
#include "burex/backends.hpp"
#include "burex/dataset.hpp"
#include "burex/metrics.hpp"
#include "burex/output_normalizer.hpp"
#include "burex/prompt_builder.hpp"
#include "burex/random.hpp"
#include "burex/records_io.hpp"
#include "burex/report_parser.hpp"
#include "burex/schema.hpp"
#include "burex/synth.hpp"
#include "burex/text.hpp"
