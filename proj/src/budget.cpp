#include "chorus/budget.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include "chorus/errors.hpp"

namespace chorus {

using nlohmann::json;

namespace {

constexpr double kBudgetSlack = 1e-9;

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

const char* mode_name(CompositionMode m) {
    return m == CompositionMode::standard ? "standard" : "advanced";
}

} // namespace

std::pair<double, double> advanced_total(const std::vector<BudgetEntry>& entries,
                                         double delta_prime) {
    if (entries.empty()) return {0.0, 0.0};
    double eps = entries.front().epsilon;
    bool homogeneous = true;
    double eps_sum = 0.0, delta_sum = 0.0;
    for (const auto& e : entries) {
        if (std::abs(e.epsilon - eps) > 1e-12) homogeneous = false;
        eps_sum += e.epsilon;
        delta_sum += e.delta;
    }
    if (!homogeneous) return {eps_sum, delta_sum};
    double k = static_cast<double>(entries.size());
    double eps_prime =
        eps * std::sqrt(2.0 * k * std::log(1.0 / delta_prime)) + k * eps * (std::expm1(eps));
    return {eps_prime, delta_sum + delta_prime};
}

std::pair<double, double> BudgetLedger::spent() const {
    if (mode == CompositionMode::advanced) return advanced_total(entries, delta_prime);
    double eps = 0.0, delta = 0.0;
    for (const auto& e : entries) {
        eps += e.epsilon;
        delta += e.delta;
    }
    return {eps, delta};
}

double BudgetLedger::remaining_epsilon() const {
    return total_epsilon - spent().first;
}

BudgetLedger make_ledger(double total_epsilon, double total_delta, CompositionMode mode,
                         double delta_prime) {
    if (!(total_epsilon > 0.0))
        throw Error(ErrorCode::corrupt_ledger, "total epsilon must be positive");
    if (total_delta < 0.0 || total_delta >= 1.0)
        throw Error(ErrorCode::corrupt_ledger, "total delta must lie in [0,1)");
    if (mode == CompositionMode::advanced && !(delta_prime > 0.0 && delta_prime < 1.0))
        throw Error(ErrorCode::corrupt_ledger, "advanced composition needs delta' in (0,1)");
    BudgetLedger ledger;
    ledger.total_epsilon = total_epsilon;
    ledger.total_delta = total_delta;
    ledger.mode = mode;
    ledger.delta_prime = delta_prime;
    return ledger;
}

BudgetLedger charge(const BudgetLedger& ledger, double epsilon, double delta,
                    const std::string& fingerprint) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::corrupt_ledger, "charge epsilon must be positive");
    if (delta < 0.0 || delta >= 1.0)
        throw Error(ErrorCode::corrupt_ledger, "charge delta must lie in [0,1)");
    BudgetLedger next = ledger;
    next.entries.push_back({fingerprint, epsilon, delta, now_iso8601()});
    auto [eps_spent, delta_spent] = next.spent();
    if (eps_spent > ledger.total_epsilon + kBudgetSlack ||
        delta_spent > ledger.total_delta + kBudgetSlack)
        throw BudgetExhausted(epsilon, ledger.remaining_epsilon());
    next.version = ledger.version + 1;
    return next;
}

namespace {

json ledger_to_json(const BudgetLedger& ledger) {
    json entries = json::array();
    for (const auto& e : ledger.entries)
        entries.push_back({{"fingerprint", e.fingerprint},
                           {"epsilon", e.epsilon},
                           {"delta", e.delta},
                           {"timestamp", e.timestamp}});
    json doc{{"totalEpsilon", ledger.total_epsilon},
             {"totalDelta", ledger.total_delta},
             {"mode", mode_name(ledger.mode)},
             {"entries", entries},
             {"version", ledger.version}};
    if (ledger.mode == CompositionMode::advanced) doc["deltaPrime"] = ledger.delta_prime;
    return doc;
}

BudgetLedger ledger_from_json(const json& doc) {
    try {
        BudgetLedger ledger;
        ledger.total_epsilon = doc.at("totalEpsilon").get<double>();
        ledger.total_delta = doc.at("totalDelta").get<double>();
        std::string mode = doc.at("mode").get<std::string>();
        if (mode == "standard") {
            ledger.mode = CompositionMode::standard;
        } else if (mode == "advanced") {
            ledger.mode = CompositionMode::advanced;
            ledger.delta_prime = doc.at("deltaPrime").get<double>();
        } else {
            throw Error(ErrorCode::corrupt_ledger, "unknown composition mode " + mode);
        }
        for (const json& je : doc.at("entries")) {
            BudgetEntry e;
            e.fingerprint = je.at("fingerprint").get<std::string>();
            e.epsilon = je.at("epsilon").get<double>();
            e.delta = je.at("delta").get<double>();
            e.timestamp = je.at("timestamp").get<std::string>();
            ledger.entries.push_back(std::move(e));
        }
        ledger.version = doc.at("version").get<int64_t>();
        return ledger;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::corrupt_ledger, e.what());
    }
}

} // namespace

BudgetLedger load_ledger(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::corrupt_ledger, "cannot open ledger file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::corrupt_ledger, std::string("invalid ledger JSON: ") + e.what());
    }
    return ledger_from_json(doc);
}

void store_ledger(const BudgetLedger& ledger, const std::string& path) {
    {
        std::ifstream probe(path);
        if (probe) {
            BudgetLedger on_disk = load_ledger(path);
            if (on_disk.version >= ledger.version)
                throw Error(ErrorCode::version_conflict,
                            "ledger on disk is at version " + std::to_string(on_disk.version) +
                                ", ours is " + std::to_string(ledger.version));
        }
    }
    std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp);
        if (!out) throw Error(ErrorCode::corrupt_ledger, "cannot write " + tmp);
        out << ledger_to_json(ledger).dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error(ErrorCode::corrupt_ledger, "cannot replace " + path);
    }
}

std::string sql_fingerprint(const std::string& canonical_sql) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, canonical_sql.data(), canonical_sql.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error(ErrorCode::internal, "sha-256 failure");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

} // namespace chorus
