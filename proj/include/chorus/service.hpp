#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "chorus/budget.hpp"
#include "chorus/catalog.hpp"
#include "chorus/errors.hpp"
#include "chorus/mechanisms.hpp"
#include "chorus/sql.hpp"

namespace chorus {

// Single-writer ledger shared by concurrent requests: the charge is the one
// serialization point. Charges load-modify-store under the lock so a failing
// request never mutates the persisted ledger.
class LedgerStore {
public:
    explicit LedgerStore(std::string path);

    // Throws BudgetExhausted / version_conflict; on success the new ledger
    // is durable before this returns.
    BudgetLedger charge_and_store(double epsilon, double delta, const std::string& fingerprint);
    BudgetLedger snapshot() const;

private:
    std::string path_;
    mutable std::mutex mutex_;
};

struct ServiceConfig {
    Catalog catalog;
    std::shared_ptr<LedgerStore> ledger;  // null: no budget enforcement (CLI without --ledger)
    std::vector<SelectionRule> rules = default_rules();
    Dialect dialect = Dialect::ansi;
    int64_t db_size = 10000;
};

// One request handler behind every transport: takes a RewriteRequest JSON
// object, returns a RewriteResponse or a structured error object
// {"error":{"code":...,"message":...}}. Never throws. The budget charge
// happens before any SQL is placed in the response.
nlohmann::json handle_rewrite_request(const ServiceConfig& config, const nlohmann::json& request);

// Exit codes shared by the CLI and service error mapping.
int exit_code_for(ErrorCode code);
const char* wire_code_for(ErrorCode code);

// Newline-delimited JSON loop over the given streams (used for --listen -).
void serve_ndjson(const ServiceConfig& config, std::istream& in, std::ostream& out);

// HTTP transport: POST /rewrite (and POST /) with a JSON body per request.
// Blocks until the process is signalled. Returns the bound port.
int serve_http(const ServiceConfig& config, const std::string& host, int port);

} // namespace chorus
