// Minimal external policy for the wire protocol: replays the turns of a
// recorded trajectory log over stdio, one per observation frame.
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: segloop-replay-policy <trajectory.log.jsonl> [...more logs]\n";
        return 2;
    }

    std::vector<std::string> turns;
    for (int i = 1; i < argc; ++i) {
        std::ifstream in(argv[i]);
        if (!in) {
            std::cerr << "cannot open " << argv[i] << "\n";
            return 2;
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || j.contains("final")) continue;
            if (j.contains("turn") && j["turn"].is_string())
                turns.push_back(j["turn"].get<std::string>());
        }
    }

    std::size_t next = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        const auto frame = nlohmann::json::parse(line, nullptr, false);
        if (frame.is_discarded() || !frame.is_object()) continue;
        const std::string type = frame.value("type", "");
        if (type == "end") break;
        if (type != "obs") continue;
        const std::string raw = next < turns.size() ? turns[next++] : std::string();
        std::cout << nlohmann::json{{"type", "turn"}, {"raw", raw}}.dump() << "\n"
                  << std::flush;
    }
    return 0;
}
