#include "aprm/judge_client.hpp"

#include "aprm/errors.hpp"
#include "aprm/judge_protocol.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace aprm {

using json = nlohmann::json;

namespace {

struct SemaphoreGuard {
    explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;
    std::counting_semaphore<>& sem;
};

void split_url(const std::string& url, std::string& base, std::string& path) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("judge endpoint '" + url + "' is not an http(s) URL");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        base = url;
        path = "/v1/chat/completions";
    } else {
        base = url.substr(0, slash);
        path = url.substr(slash);
    }
}

} // namespace

JudgeClientOptions JudgeClientOptions::from_env(JudgeClientOptions base) {
    if (const char* v = std::getenv("ANNOTATOR_ENDPOINT"); v && *v) base.endpoint = v;
    if (const char* v = std::getenv("ANNOTATOR_MODEL"); v && *v) base.model = v;
    if (const char* v = std::getenv("ANNOTATOR_TIMEOUT_MS"); v && *v) {
        try {
            base.timeout_ms = std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError(std::string("ANNOTATOR_TIMEOUT_MS is not an integer: ") + v);
        }
    }
    return base;
}

JudgeClientOptions JudgeClientOptions::from_env() { return from_env(JudgeClientOptions{}); }

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string make_chat_request(const std::string& model, const std::string& prompt, double temperature) {
    json body;
    body["model"] = model;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = temperature;
    return body.dump();
}

std::optional<std::string> extract_chat_content(const std::string& body) {
    const auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message")) return std::nullopt;
    const auto& message = first["message"];
    if (!message.is_object() || !message.contains("content") || !message["content"].is_string()) return std::nullopt;
    return message["content"].get<std::string>();
}

JudgeClient::JudgeClient(JudgeClientOptions options)
    : options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
    if (options_.endpoint.empty()) throw ConfigError("judge annotator needs an endpoint (--endpoint or ANNOTATOR_ENDPOINT)");
    if (options_.max_attempts < 1) throw ConfigError("judge annotator needs max_attempts >= 1");
    split_url(options_.endpoint, base_url_, path_);
    if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::optional<std::string> JudgeClient::cache_lookup(const std::string& key) {
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    if (!options_.cache_dir) return std::nullopt;
    std::ifstream in(*options_.cache_dir / (key + ".txt"), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    std::lock_guard lock(cache_mutex_);
    cache_[key] = buf.str();
    return buf.str();
}

void JudgeClient::cache_store(const std::string& key, const std::string& response) {
    {
        std::lock_guard lock(cache_mutex_);
        cache_[key] = response;
    }
    if (!options_.cache_dir) return;
    // Write-then-rename so concurrent writers of the same key never expose a partial file.
    const auto final_path = *options_.cache_dir / (key + ".txt");
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << response;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
}

std::optional<std::string> JudgeClient::post(const std::string& prompt) {
    SemaphoreGuard guard(in_flight_);
    ++requests_;
    httplib::Client client(base_url_);
    const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path_, make_chat_request(options_.model, prompt, options_.temperature), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    return extract_chat_content(res->body);
}

std::optional<Annotation> JudgeClient::annotate(const Trajectory& traj) {
    std::vector<std::string> texts;
    texts.reserve(traj.size());
    for (const auto& s : traj.steps) {
        if (!s.text || s.text->empty()) throw DataError("judge annotator: trajectory '" + traj.id + "' has a step without text");
        texts.push_back(*s.text);
    }
    const std::string prompt = build_judge_prompt(traj.question, texts);
    if (prompt.size() > options_.max_prompt_bytes)
        throw DataError("judge prompt for '" + traj.id + "' is " + std::to_string(prompt.size()) + " bytes, over the limit of " +
                        std::to_string(options_.max_prompt_bytes));
    const std::string key = sha256_hex(prompt);

    if (auto cached = cache_lookup(key)) {
        try {
            const auto verdict = parse_judge_response(*cached, traj.size());
            return Annotation{verdict.first_error(), AnnotationSource::cache, *cached};
        } catch (const JudgeParseError&) {
            // Stale or foreign cache entry; ask again.
        }
    }

    bool reasked = false;
    bool transport_only = true;
    int delay_ms = options_.backoff_base_ms;
    for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
        if (attempt > 0 && delay_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        const auto response = post(prompt);
        if (!response) continue;
        transport_only = false;
        try {
            const auto verdict = parse_judge_response(*response, traj.size());
            cache_store(key, *response);
            consecutive_failures_.store(0);
            return Annotation{verdict.first_error(), AnnotationSource::judge, *response};
        } catch (const JudgeParseError&) {
            if (reasked) break;
            reasked = true;
        }
    }
    if (transport_only) {
        if (++consecutive_failures_ >= options_.max_consecutive_failures)
            throw AnnotatorError("judge endpoint " + options_.endpoint + " unavailable after " +
                                 std::to_string(consecutive_failures_.load()) + " consecutive failed trajectories");
    } else {
        consecutive_failures_.store(0);
    }
    return std::nullopt;
}

} // namespace aprm
