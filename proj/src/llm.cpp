#include "tagtopo/llm.hpp"

#include "tagtopo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace tagtopo {

using nlohmann::json;

int LlmJudgment::pseudo_label() const {
    if (!ranked_categories || ranked_categories->empty())
        throw ParseFailure("judgment carries no ranked categories");
    return ranked_categories->front();
}

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string format_ratio(double r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

} // namespace

const std::vector<PromptExample>& default_prompt_examples() {
    static const std::vector<PromptExample> examples = {
        {"Title: Spectral clustering on citation networks. Abstract: We study how eigenvectors "
         "of graph Laplacians separate communities of papers.",
         "Title: Community detection with random walks. Abstract: Random-walk statistics are "
         "used to group strongly connected papers.",
         0.8},
        {"Title: Deep reinforcement learning for robotic grasping. Abstract: A policy network "
         "learns manipulation from raw camera input.",
         "Title: Query optimization in relational databases. Abstract: Cost models for join "
         "ordering in SQL engines.",
         0.1},
    };
    return examples;
}

std::string build_similarity_prompt(const std::string& text_a, const std::string& text_b,
                                    const std::vector<PromptExample>& examples) {
    if (text_a.empty() || text_b.empty())
        throw ConfigError("build_similarity_prompt: empty input text");
    std::ostringstream os;
    os << "Your task is to calculate the similarity between the given two papers.";
    if (!examples.empty()) {
        os << " Here are some examples where the input is the information for paper A and "
              "paper B, and the output is the estimated related ratio between paper A and "
              "paper B: \n";
        for (std::size_t i = 0; i < examples.size(); ++i) {
            os << "Example " << (i + 1) << ": [Input] Paper A: " << examples[i].text_a
               << " Paper B: " << examples[i].text_b
               << " [Output] Estimated Related Ratio between Paper A and Paper B: "
               << format_ratio(examples[i].ratio) << "\n";
        }
    } else {
        os << "\n";
    }
    os << "Please return the similarity between the following two papers and briefly explain "
          "the reason: Paper A: "
       << text_a << " Paper B: " << text_b
       << ". Your return form is: Related ratio = ***, Reason: ***.";
    return os.str();
}

std::string build_pseudolabel_prompt(const std::string& text,
                                     const std::vector<std::string>& categories) {
    if (categories.size() < 2)
        throw ConfigError("build_pseudolabel_prompt: need at least two categories");
    std::ostringstream os;
    os << "The title and abstract of the paper are as follows: " << text << "\n";
    os << "Question: Which of the following subcategories does this paper belong to: ";
    for (std::size_t i = 0; i < categories.size(); ++i) {
        if (i) os << ", ";
        os << "(" << char('A' + int(i)) << ") ";
        if (categories[i].find(',') != std::string::npos)
            os << '"' << categories[i] << '"'; // keep the option list unambiguous
        else
            os << categories[i];
    }
    os << "? If multiple options apply, provide a comma-separated list ordered from most to "
          "least related, then for each choice you gave, explain how it is present in the "
          "text.\n";
    os << "Answer: ";
    return os.str();
}

double extract_ratio(const std::string& raw) {
    const std::string low = lower(raw);

    auto parse_number_at = [&](std::size_t pos, double& out, std::size_t& end) {
        std::size_t i = pos;
        bool digits = false, dot = false;
        std::string tok;
        while (i < low.size()) {
            const char c = low[i];
            if (std::isdigit(static_cast<unsigned char>(c))) {
                digits = true;
                tok.push_back(c);
            } else if (c == '.' && !dot) {
                dot = true;
                tok.push_back(c);
            } else {
                break;
            }
            ++i;
        }
        if (!digits) return false;
        out = std::stod(tok);
        end = i;
        return true;
    };

    auto accept = [&](double v, double& out) {
        if (v >= 0.0 && v <= 1.0) {
            out = v;
            return true;
        }
        if (v > 1.0 && v <= 1.05) {
            std::cerr << "extract_ratio: clamping " << v << " to 1.0\n";
            out = 1.0;
            return true;
        }
        return false;
    };

    // primary pattern: "related ratio" ... '=' or ':' ... number
    const std::size_t anchor = low.find("related ratio");
    if (anchor != std::string::npos) {
        std::size_t i = anchor + std::string("related ratio").size();
        while (i < low.size() && (low[i] == ' ' || low[i] == '\t')) ++i;
        if (i < low.size() && (low[i] == '=' || low[i] == ':')) {
            ++i;
            while (i < low.size() && (low[i] == ' ' || low[i] == '\t')) ++i;
            double v = 0.0;
            std::size_t end = 0;
            if (parse_number_at(i, v, end)) {
                double out = 0.0;
                if (accept(v, out)) return out;
            }
        }
    }

    // fallback: first standalone real in [0,1]
    for (std::size_t i = 0; i < low.size(); ++i) {
        const char c = low[i];
        if (!std::isdigit(static_cast<unsigned char>(c)) &&
            !(c == '.' && i + 1 < low.size() &&
              std::isdigit(static_cast<unsigned char>(low[i + 1]))))
            continue;
        if (i > 0) {
            const char p = low[i - 1];
            // glued to an identifier or a hyphenated token like gpt-3.5
            if (std::isalnum(static_cast<unsigned char>(p)) || p == '.' ||
                (p == '-' && i > 1 && std::isalnum(static_cast<unsigned char>(low[i - 2])))) {
                while (i < low.size() &&
                       (std::isdigit(static_cast<unsigned char>(low[i])) || low[i] == '.'))
                    ++i;
                continue;
            }
        }
        double v = 0.0;
        std::size_t end = 0;
        if (parse_number_at(i, v, end)) {
            double out = 0.0;
            if (accept(v, out)) return out;
            i = end;
        }
    }
    throw ParseFailure("no ratio found in response: " + raw.substr(0, 80));
}

std::vector<int> extract_ranked_labels(const std::string& raw,
                                       const std::vector<std::string>& categories) {
    const std::string low = lower(raw);
    std::map<int, std::size_t> first_pos; // category -> earliest mention

    auto note = [&](std::size_t pos, int cat) {
        auto [it, inserted] = first_pos.emplace(cat, pos);
        if (!inserted) it->second = std::min(it->second, pos);
    };

    // full category names, word-bounded, earliest mention wins
    for (int c = 0; c < int(categories.size()); ++c) {
        const std::string name = lower(categories[std::size_t(c)]);
        if (name.empty()) continue;
        std::size_t pos = low.find(name);
        while (pos != std::string::npos) {
            const bool left_ok =
                pos == 0 || !std::isalnum(static_cast<unsigned char>(low[pos - 1]));
            const std::size_t after = pos + name.size();
            const bool right_ok =
                after >= low.size() || !std::isalnum(static_cast<unsigned char>(low[after]));
            if (left_ok && right_ok) {
                note(pos, c);
                break;
            }
            pos = low.find(name, pos + 1);
        }
    }

    // single-letter option tokens: A, B, ... possibly wrapped as (A) or "A."
    for (std::size_t i = 0; i < low.size(); ++i) {
        const char c = low[i];
        if (c < 'a' || c >= char('a' + std::min<std::size_t>(categories.size(), 26))) continue;
        const bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(low[i - 1]));
        const bool right_ok =
            i + 1 >= low.size() || !std::isalnum(static_cast<unsigned char>(low[i + 1]));
        if (left_ok && right_ok) note(i, c - 'a');
    }

    if (first_pos.empty())
        throw ParseFailure("no recognizable category in response: " + raw.substr(0, 80));
    std::vector<std::pair<std::size_t, int>> hits;
    hits.reserve(first_pos.size());
    for (const auto& [cat, pos] : first_pos) hits.emplace_back(pos, cat);
    std::sort(hits.begin(), hits.end());
    std::vector<int> ranked;
    ranked.reserve(hits.size());
    for (const auto& [pos, cat] : hits) ranked.push_back(cat);
    return ranked;
}

// ---------------------------------------------------------------------------
// mock backend

MockBackend::MockBackend(MockMode mode, std::uint64_t seed,
                         std::map<std::string, int> label_of_text, double p_correct)
    : mode_(mode), seed_(seed), label_of_text_(std::move(label_of_text)),
      p_correct_(p_correct) {}

int MockBackend::lookup_label(const std::string& text) const {
    auto it = label_of_text_.find(text);
    if (it == label_of_text_.end())
        throw BackendError("mock backend: no ground-truth label for text: " + text.substr(0, 60));
    return it->second;
}

std::string MockBackend::id() const {
    switch (mode_) {
    case MockMode::ClassOracle: return "mock:class-oracle";
    case MockMode::Lexical: return "mock:lexical";
    case MockMode::NoisyLabeler: return "mock:noisy";
    }
    return "mock";
}

std::string MockBackend::complete(const PromptRequest& request) {
    calls_++;
    // per-request stream derived from content, so call order never matters
    const std::uint64_t content =
        fnv1a64(request.text_a, fnv1a64(request.text_b, fnv1a64(request.text)));
    Rng rng(hash_combine(seed_, content));

    if (request.kind == PromptKind::Similarity) {
        double ratio = 0.0;
        std::string why;
        if (mode_ == MockMode::Lexical) {
            auto tokens = [](const std::string& s) {
                std::set<std::string> out;
                std::string cur;
                for (char ch : s) {
                    if (std::isalnum(static_cast<unsigned char>(ch)))
                        cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
                    else if (!cur.empty()) {
                        out.insert(cur);
                        cur.clear();
                    }
                }
                if (!cur.empty()) out.insert(cur);
                return out;
            };
            const auto ta = tokens(request.text_a);
            const auto tb = tokens(request.text_b);
            std::size_t inter = 0;
            for (const auto& t : ta) inter += tb.count(t);
            const std::size_t uni = ta.size() + tb.size() - inter;
            const double jaccard = uni ? double(inter) / double(uni) : 0.0;
            ratio = std::round(jaccard * 10.0) / 10.0;
            why = "token overlap " + std::to_string(jaccard).substr(0, 4);
        } else {
            const bool same = lookup_label(request.text_a) == lookup_label(request.text_b);
            bool truthful = true;
            if (mode_ == MockMode::NoisyLabeler) truthful = rng.uniform() < p_correct_;
            const bool report_same = truthful ? same : !same;
            ratio = report_same ? 0.9 : 0.1;
            why = report_same ? "the two papers study the same topic"
                              : "the two papers study unrelated topics";
        }
        std::ostringstream os;
        os << "Related ratio = " << format_ratio(ratio) << ", Reason: " << why << ".";
        return os.str();
    }

    const int k = int(request.categories.size());
    if (k < 2) throw BackendError("mock backend: pseudo-label request without categories");
    if (mode_ == MockMode::Lexical) {
        // rank categories by raw token overlap with the text; ties keep the
        // lower index
        auto toks = [](const std::string& s) {
            std::set<std::string> out;
            std::string cur;
            for (char ch : s) {
                if (std::isalnum(static_cast<unsigned char>(ch)))
                    cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
                else if (!cur.empty()) {
                    out.insert(cur);
                    cur.clear();
                }
            }
            if (!cur.empty()) out.insert(cur);
            return out;
        };
        const auto text_toks = toks(request.text);
        std::vector<std::pair<int, int>> overlap; // (-count, index) for a stable sort
        for (int c = 0; c < k; ++c) {
            int count = 0;
            for (const auto& t : toks(request.categories[std::size_t(c)]))
                count += int(text_toks.count(t));
            overlap.emplace_back(-count, c);
        }
        std::sort(overlap.begin(), overlap.end());
        std::ostringstream os;
        os << char('A' + overlap[0].second) << ", " << char('A' + overlap[1].second)
           << ". Ranked by keyword overlap with the text.";
        return os.str();
    }

    const int truth = lookup_label(request.text);
    int first = truth;
    if (mode_ == MockMode::NoisyLabeler && rng.uniform() >= p_correct_) {
        first = int(rng.uniform_int(0, k - 2));
        if (first >= truth) ++first; // uniformly random wrong label
    }
    int second = int(rng.uniform_int(0, k - 2));
    if (second >= first) ++second;
    std::ostringstream os;
    os << char('A' + first) << ", " << char('A' + second) << ". The text matches option "
       << char('A' + first) << " most closely.";
    return os.str();
}

// ---------------------------------------------------------------------------
// judgment cache

namespace {

json judgment_to_json(const LlmJudgment& j) {
    json out;
    out["kind"] = j.kind == PromptKind::Similarity ? "similarity" : "pseudo-label";
    if (j.ratio) out["ratio"] = *j.ratio;
    if (j.ranked_categories) out["ranked"] = *j.ranked_categories;
    out["reason"] = j.reason;
    out["raw"] = j.raw;
    return out;
}

LlmJudgment judgment_from_json(const json& in) {
    LlmJudgment j;
    j.kind = in.value("kind", "similarity") == "pseudo-label" ? PromptKind::PseudoLabel
                                                              : PromptKind::Similarity;
    if (in.contains("ratio")) j.ratio = in["ratio"].get<double>();
    if (in.contains("ranked")) j.ranked_categories = in["ranked"].get<std::vector<int>>();
    j.reason = in.value("reason", "");
    j.raw = in.value("raw", "");
    return j;
}

std::string hex64(std::uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[std::size_t(i)] = digits[x & 0xf];
        x >>= 4;
    }
    return s;
}

} // namespace

JudgmentCache::JudgmentCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            entries_[rec.at("key").get<std::string>()] =
                judgment_from_json(rec.at("judgment"));
        } catch (const json::exception&) {
            // ignore truncated tail lines from interrupted runs
        }
    }
}

std::string JudgmentCache::key(const PromptRequest& req, const std::string& backend_id) {
    std::string material = req.kind == PromptKind::Similarity ? "sim" : "pl";
    material += '\x1f';
    material += kPromptTemplateVersion;
    material += '\x1f';
    material += backend_id;
    material += '\x1f';
    material += req.text_a;
    material += '\x1f';
    material += req.text_b;
    material += '\x1f';
    material += req.text;
    material += '\x1f';
    material += std::to_string(req.example_count);
    for (const auto& c : req.categories) {
        material += '\x1f';
        material += c;
    }
    return hex64(fnv1a64(material));
}

std::optional<LlmJudgment> JudgmentCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void JudgmentCache::put(const std::string& key, const LlmJudgment& judgment) {
    std::lock_guard lock(mu_);
    if (entries_.count(key)) return;
    entries_[key] = judgment;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DataError("cannot append to cache file: " + path_);
    json rec;
    rec["key"] = key;
    rec["kind"] = judgment.kind == PromptKind::Similarity ? "similarity" : "pseudo-label";
    rec["judgment"] = judgment_to_json(judgment);
    rec["raw"] = judgment.raw;
    rec["ts"] = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();
    out << rec.dump() << "\n";
}

std::size_t JudgmentCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

// ---------------------------------------------------------------------------
// gateway

Gateway::Gateway(Backend& backend, JudgmentCache* cache, int max_retries,
                 double backoff_seconds)
    : backend_(backend), cache_(cache), max_retries_(max_retries),
      backoff_seconds_(backoff_seconds) {}

LlmJudgment Gateway::parse(const PromptRequest& request, const std::string& raw) const {
    LlmJudgment j;
    j.kind = request.kind;
    j.raw = raw;
    if (request.kind == PromptKind::Similarity) {
        j.ratio = extract_ratio(raw);
        const std::size_t rpos = lower(raw).find("reason");
        if (rpos != std::string::npos) {
            std::size_t start = raw.find_first_of(":=", rpos);
            if (start != std::string::npos) {
                ++start;
                while (start < raw.size() && raw[start] == ' ') ++start;
                j.reason = raw.substr(start);
            }
        }
    } else {
        j.ranked_categories = extract_ranked_labels(raw, request.categories);
        j.reason = raw;
    }
    return j;
}

std::string Gateway::complete_with_retry(const PromptRequest& request) {
    double backoff = backoff_seconds_;
    for (int attempt = 1;; ++attempt) {
        try {
            backend_calls_++;
            return backend_.complete(request);
        } catch (const BackendError&) {
            if (attempt >= max_retries_) throw;
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
    }
}

LlmJudgment Gateway::query(const PromptRequest& request) {
    const std::string key = JudgmentCache::key(request, backend_.id());
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            cache_hits_++;
            return *hit;
        }
    }
    LlmJudgment judgment;
    try {
        judgment = parse(request, complete_with_retry(request));
    } catch (const ParseFailure&) {
        // one reprompt, then give up and let the caller decide
        judgment = parse(request, complete_with_retry(request));
    }
    if (cache_) cache_->put(key, judgment);
    return judgment;
}

// ---------------------------------------------------------------------------
// http backend

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw ConfigError("http backend: endpoint not configured");
}

std::string HttpBackend::id() const { return "http:" + cfg_.model; }

void HttpBackend::rate_limit_acquire() {
    using clock = std::chrono::steady_clock;
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    in_flight_++;
    const double now =
        std::chrono::duration<double>(clock::now().time_since_epoch()).count();
    const double interval =
        cfg_.requests_per_minute > 0 ? 60.0 / cfg_.requests_per_minute : 0.0;
    const double slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
    lock.unlock();
    if (slot > now)
        std::this_thread::sleep_for(std::chrono::duration<double>(slot - now));
}

} // namespace tagtopo

// httplib pulled in only here; it drags in system sockets
#include <httplib.h>

namespace tagtopo {

std::string HttpBackend::complete(const PromptRequest& request) {
    rate_limit_acquire();
    struct Release {
        HttpBackend* self;
        ~Release() {
            {
                std::lock_guard lock(self->mu_);
                self->in_flight_--;
            }
            self->cv_.notify_one();
        }
    } release{this};

    std::string prompt;
    if (request.kind == PromptKind::Similarity) {
        auto examples = default_prompt_examples();
        examples.resize(std::min<std::size_t>(examples.size(),
                                              std::size_t(std::max(0, request.example_count))));
        prompt = build_similarity_prompt(request.text_a, request.text_b, examples);
    } else {
        prompt = build_pseudolabel_prompt(request.text, request.categories);
    }

    json body;
    body["model"] = cfg_.model;
    body["temperature"] = cfg_.temperature;
    body["messages"] = json::array({{{"role", "user"}, {"content", prompt}}});

    httplib::Client client(cfg_.endpoint);
    client.set_connection_timeout(cfg_.connect_timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res)
        throw BackendError("http backend: no response from " + cfg_.endpoint);
    if (res->status != 200)
        throw BackendError("http backend: status " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 200));
    try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("http backend: malformed completion payload: ") +
                           e.what());
    }
}

} // namespace tagtopo
