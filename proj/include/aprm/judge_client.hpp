#pragma once

#include "aprm/annotate.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>

namespace aprm {

struct JudgeClientOptions {
    // Full URL; the path defaults to /v1/chat/completions when the URL has none.
    std::string endpoint;
    std::string model = "judge";
    double temperature = 0.0;
    int timeout_ms = 60000;
    int max_attempts = 4;            // per trajectory, transport failures and re-asks combined
    int backoff_base_ms = 200;       // doubled after every failed attempt
    std::size_t max_prompt_bytes = 256 * 1024;
    std::size_t max_in_flight = 4;
    // Trajectories in a row that failed on transport alone before the judge is declared down.
    int max_consecutive_failures = 8;
    std::optional<std::filesystem::path> cache_dir;

    // Fills endpoint/model/timeout from ANNOTATOR_ENDPOINT, ANNOTATOR_MODEL and
    // ANNOTATOR_TIMEOUT_MS when those are set.
    static JudgeClientOptions from_env(JudgeClientOptions base);
    static JudgeClientOptions from_env();
};

std::string sha256_hex(std::string_view data);

// {"model": ..., "messages": [{"role": "user", "content": prompt}], "temperature": ...}
std::string make_chat_request(const std::string& model, const std::string& prompt, double temperature);
// choices[0].message.content; std::nullopt when the body does not have that shape.
std::optional<std::string> extract_chat_content(const std::string& body);

/// Labels trajectories by prompting a chat-completion endpoint with the judge template.
/// Responses are cached by the SHA-256 of the prompt, in memory and optionally on disk.
class JudgeClient final : public Annotator {
public:
    explicit JudgeClient(JudgeClientOptions options);

    std::optional<Annotation> annotate(const Trajectory& traj) override;
    std::string_view name() const override { return "judge"; }

    std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
    std::optional<std::string> post(const std::string& prompt);
    std::optional<std::string> cache_lookup(const std::string& key);
    void cache_store(const std::string& key, const std::string& response);

    JudgeClientOptions options_;
    std::string base_url_;
    std::string path_;
    std::counting_semaphore<> in_flight_;
    std::mutex cache_mutex_;
    std::unordered_map<std::string, std::string> cache_;
    std::atomic<std::size_t> requests_{0};
    std::atomic<int> consecutive_failures_{0};
};

} // namespace aprm
