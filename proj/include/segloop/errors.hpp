#pragma once

#include <stdexcept>
#include <string>

namespace segloop {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyDatasetError : std::runtime_error {
    explicit EmptyDatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SceneGenError : std::runtime_error {
    explicit SceneGenError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PromptError : std::runtime_error {
    explicit PromptError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ViewError : std::runtime_error {
    explicit ViewError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EpisodeClosedError : std::runtime_error {
    explicit EpisodeClosedError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GtEmptyError : std::runtime_error {
    explicit GtEmptyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RescueError : std::runtime_error {
    explicit RescueError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScoreError : std::runtime_error {
    explicit ScoreError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace segloop
