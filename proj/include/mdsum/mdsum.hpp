#pragma once

// Umbrella header.

#include "mdsum/backend.hpp"
#include "mdsum/budget.hpp"
#include "mdsum/config.hpp"
#include "mdsum/corpus.hpp"
#include "mdsum/error.hpp"
#include "mdsum/eval.hpp"
#include "mdsum/http_client.hpp"
#include "mdsum/report.hpp"
#include "mdsum/retrieval.hpp"
#include "mdsum/runner.hpp"
#include "mdsum/strategies.hpp"
#include "mdsum/tokenizer.hpp"
#include "mdsum/words.hpp"
