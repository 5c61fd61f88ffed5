#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "de/channel.hpp"
#include "de/config.hpp"
#include "de/dataspace.hpp"

namespace de {

// Owns the DataSpace and every assembled channel; brings channels online and
// offline independently. One engine per process.
class Engine {
 public:
  Engine(EngineConfig config, const PluginRegistry& registry, const Clock& clock,
         Channel::Options channel_options);

  // Creates every channel's space first (so source proxies can resolve their
  // targets), then assembles the channels. Throws on assembly failures.
  void assemble();

  std::vector<std::string> channel_ids() const;
  Channel& channel(const std::string& id);
  bool has_channel(const std::string& id) const;

  void start_all();
  void stop_all();

  // Lifecycle commands for one channel. up() on a stopped channel rebuilds
  // it on the same DataBlock lineage, so generations stay gap-free.
  ChannelStatus up(const std::string& id);
  ChannelStatus down(const std::string& id);
  ChannelStatus status(const std::string& id);

  DataSpace& dataspace() { return space_; }

 private:
  EngineConfig config_;
  const PluginRegistry& registry_;
  const Clock& clock_;
  Channel::Options channel_options_;
  DataSpace space_;
  std::map<std::string, SpaceHandle> handles_;
  std::map<std::string, std::unique_ptr<Channel>> channels_;
};

}  // namespace de
