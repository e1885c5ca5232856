#pragma once

#include <map>
#include <string>

#include "momo/agent.hpp"
#include "momo/dynamics.hpp"
#include "momo/morse.hpp"

namespace momo {

/// Checkpoint format: one "MOMO-CKPT v1 <manifest-bytes>" line, a JSON
/// manifest (format version, per-section architecture descriptions,
/// parameter names, shapes and byte offsets), then the payload of
/// little-endian float64 values in declaration order. One format shared by
/// every module.

void save_morse(const std::string& path, const MorseNetwork& m,
                const std::map<std::string, std::string>& extra_meta = {});
MorseNetwork load_morse(const std::string& path,
                        std::map<std::string, std::string>* meta_out = nullptr);

void save_dynamics(const std::string& path, const DynamicsModel& m,
                   const std::map<std::string, std::string>& extra_meta = {});
DynamicsModel load_dynamics(
    const std::string& path,
    std::map<std::string, std::string>* meta_out = nullptr);

void save_agent(const std::string& path, const Td3Agent& agent,
                const std::map<std::string, std::string>& extra_meta = {});
Td3Agent load_agent(const std::string& path,
                    std::map<std::string, std::string>* meta_out = nullptr);

}  // namespace momo
