// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>
#include <tim/scene.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

// Offline backends: record/replay, turn scripts, the rule-based oracle
// answerer and the sycophant verifier control.
namespace tim
{

/// Replies looked up by request_hash().
class ReplayBackend final: public Backend
{
  public:
    explicit ReplayBackend(std::string id, std::map<std::string, std::string> table = {});

    /// Reads `{"hash": ..., "text": ...}` lines.
    static auto load(std::string id, const std::filesystem::path& path) -> Expected<ReplayBackend, std::string>;

    void record(const GenerationRequest& request, std::string text);

    [[nodiscard]] auto id() const -> std::string override { return _id; }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;

  private:
    std::string _id;
    std::map<std::string, std::string> _table;
};

/// A verifier script split at tool calls. The turn emitted is chosen by how
/// many <tool> responses the assistant prefix already holds, so replies are
/// a pure function of the request.
class ScriptedBackend final: public Backend
{
  public:
    ScriptedBackend(std::string id, std::vector<std::string> turns);

    [[nodiscard]] auto id() const -> std::string override { return _id; }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;

  private:
    std::string _id;
    std::vector<std::string> _turns;
};

/// Control policy: every paragraph judged CORRECT, no tool calls.
class SycophantBackend final: public Backend
{
  public:
    [[nodiscard]] auto id() const -> std::string override { return "sycophant"; }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;
};

inline constexpr auto InsufficientInformation = std::string_view { "INSUFFICIENT INFORMATION" };

/// Rule-based answers from scene ground truth: cell, row, column and row
/// total lookups on value grids, attribute lookups on shape sets. Several
/// questions are answered as numbered lines.
auto oracle_answer(const Scene& scene, const std::vector<std::string>& questions) -> std::string;
auto oracle_answer_one(const Scene& scene, std::string_view question) -> std::string;

/// Tool answerer backed by oracle_answer; reads the scene from the image in
/// the request.
class OracleAnswerer final: public Backend
{
  public:
    [[nodiscard]] auto id() const -> std::string override { return "oracle"; }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;
};

/// Forwards to another backend and keeps every request it saw.
class RecordingBackend final: public Backend
{
  public:
    explicit RecordingBackend(Backend& inner): _inner(inner) {}

    [[nodiscard]] auto id() const -> std::string override { return _inner.id(); }
    [[nodiscard]] auto max_in_flight() const -> std::size_t override { return _inner.max_in_flight(); }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;

    [[nodiscard]] auto requests() const -> std::vector<GenerationRequest>;

  private:
    Backend& _inner;
    mutable std::mutex _mutex;
    std::vector<GenerationRequest> _requests;
};

} // namespace tim
