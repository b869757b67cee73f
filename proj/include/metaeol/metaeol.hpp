#ifndef METAEOL_METAEOL_HPP
#define METAEOL_METAEOL_HPP

#include "metaeol/backend.hpp"
#include "metaeol/bridge_server.hpp"
#include "metaeol/embedding.hpp"
#include "metaeol/error.hpp"
#include "metaeol/experiments.hpp"
#include "metaeol/format.hpp"
#include "metaeol/hash.hpp"
#include "metaeol/http_backend.hpp"
#include "metaeol/logreg.hpp"
#include "metaeol/mock_backend.hpp"
#include "metaeol/probe.hpp"
#include "metaeol/prompt_registry.hpp"
#include "metaeol/report.hpp"
#include "metaeol/run_config.hpp"
#include "metaeol/storage.hpp"
#include "metaeol/sts.hpp"
#include "metaeol/transfer.hpp"

#endif  // METAEOL_METAEOL_HPP
