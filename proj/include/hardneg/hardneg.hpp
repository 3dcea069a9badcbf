#pragma once

#include "hardneg/corpus/json_io.hpp"
#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/corpus/types.hpp"
#include "hardneg/corpus/validate.hpp"
#include "hardneg/dataset/examples.hpp"
#include "hardneg/dataset/scoring.hpp"
#include "hardneg/eval/metrics.hpp"
#include "hardneg/eval/rerank.hpp"
#include "hardneg/eval/run.hpp"
#include "hardneg/gateway/gateway.hpp"
#include "hardneg/gateway/image.hpp"
#include "hardneg/gateway/scripted_mock.hpp"
#include "hardneg/gateway/types.hpp"
#include "hardneg/generation/generation.hpp"
#include "hardneg/generation/parse.hpp"
#include "hardneg/generation/prompts.hpp"
#include "hardneg/pipeline/commands.hpp"
#include "hardneg/pipeline/config.hpp"
#include "hardneg/pipeline/stages.hpp"
#include "hardneg/verification/verification.hpp"
