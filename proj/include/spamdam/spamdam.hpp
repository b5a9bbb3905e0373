#pragma once

#include "spamdam/advtext.hpp"
#include "spamdam/corpus.hpp"
#include "spamdam/features.hpp"
#include "spamdam/fedsim.hpp"
#include "spamdam/harness.hpp"
#include "spamdam/metrics.hpp"
#include "spamdam/model.hpp"
#include "spamdam/ocrpost.hpp"
#include "spamdam/poison.hpp"
#include "spamdam/report.hpp"
#include "spamdam/rng.hpp"
#include "spamdam/synth.hpp"
#include "spamdam/triage.hpp"
#include "spamdam/unicode.hpp"
