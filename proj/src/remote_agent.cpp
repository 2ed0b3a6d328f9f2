#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "factorlab/search.hpp"

namespace factorlab {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("remote agent endpoint needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

void log_exchange(const std::filesystem::path& sidecar, const nlohmann::json& entry) {
  if (sidecar.empty()) return;
  std::ofstream out(sidecar, std::ios::app | std::ios::binary);
  out << entry.dump() << '\n';
}

const char* kSystemPrompt =
    "You propose cross-sectional factor candidates for daily crypto returns. "
    "Write each candidate as a block:\n"
    "### CANDIDATE\nname: <unique identifier>\nhypothesis: <falsifiable mechanism>\n"
    "rationale: <why it should work>\ntype: hypothesis\nrecipe: <one-line recipe>\n### END\n"
    "Recipe operators: col(name), cs_rank(e), cs_zscore(e), lag(n, e), roll_mean(w, e), roll_std(w, e), "
    "diff(n, e), pct_change(n, e), log1p(e), abs(e), clip(lo, hi, e), lincomb(w1, e1, w2, e2, ...). "
    "Each recipe needs at least one time-series or nonlinear operator.";

}  // namespace

RemoteAgent::RemoteAgent(RemoteAgentConfig cfg) : cfg_(std::move(cfg)) {
  split_endpoint(cfg_.endpoint);
  if (cfg_.max_retries < 0) throw ConfigError("remote agent max_retries must be >= 0");
}

std::string RemoteAgent::render_prompt(const ResearchState& state, int round, std::size_t batch) const {
  std::string p = "Round " + std::to_string(round) + ". Propose " + std::to_string(batch) + " new candidates.\n";
  p += "Approved columns:";
  for (const auto& c : cfg_.columns) p += " " + c;
  p += "\n\nPrevious candidates (name | verdict | train mean IC | t | recipe | interpretation):\n";
  for (const auto& c : state.candidates) {
    const auto& r = c.record;
    p += r.name + " | ";
    if (r.status == CandidateStatus::rejected) {
      p += "rejected";
    } else {
      p += r.verdict.pass ? "pass" : "fail";
      p += " | " + format_double(r.metrics_train->mean_ic) + " | " + format_double(r.metrics_train->ic_tstat);
    }
    p += " | " + r.recipe_text + " | " + r.interpretation + "\n";
  }
  p += "\nHold pool:";
  for (const auto& n : state.pools.hold) p += " " + n;
  p += "\n";
  if (!state.summaries.empty()) {
    p += "\nLast round summary: " + state.summaries.back().text + "\nDirection: " + state.summaries.back().decision +
         "\n";
  }
  p += "\nDo not reuse any name listed above.\n";
  return p;
}

ProposalBatch RemoteAgent::propose(const ResearchState& state, int round, std::size_t batch) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (!key || !*key) throw AgentError("environment variable " + cfg_.api_key_env + " is not set");

  const Endpoint ep = split_endpoint(cfg_.endpoint);
  nlohmann::json request = {
      {"model", cfg_.model},
      {"temperature", 0},
      {"messages",
       {{{"role", "system"}, {"content", kSystemPrompt}}, {{"role", "user"}, {"content", render_prompt(state, round, batch)}}}}};
  const std::string body = request.dump();

  httplib::Client client(ep.base);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    nlohmann::json log_entry = {{"round", round},
                                {"attempt", attempt},
                                {"endpoint", cfg_.endpoint},
                                {"authorization", "Bearer [REDACTED]"},
                                {"request", request}};
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      log_entry["error"] = last_error;
      log_exchange(cfg_.sidecar, log_entry);
      continue;
    }
    log_entry["status"] = res->status;
    log_entry["response"] = res->body;
    log_exchange(cfg_.sidecar, log_entry);
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto reply = nlohmann::json::parse(res->body);
      const std::string content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      ProposalBatch b = parse_proposal_blocks(content);
      return b;
    } catch (const std::exception& ex) {
      throw AgentError(std::string("unreadable chat-completion reply: ") + ex.what());
    }
  }
  throw AgentError("remote agent: " + last_error);
}

}  // namespace factorlab
