#include "de/engine.hpp"

namespace de {

Engine::Engine(EngineConfig config, const PluginRegistry& registry, const Clock& clock,
               Channel::Options channel_options)
    : config_(std::move(config)),
      registry_(registry),
      clock_(clock),
      channel_options_(channel_options),
      space_(config_.archive_dir, clock) {}

void Engine::assemble() {
  for (const auto& ch : config_.channels)
    handles_[ch.channel_id] = space_.create_space(ch.channel_id);
  for (const auto& ch : config_.channels)
    channels_[ch.channel_id] = std::make_unique<Channel>(
        ch, channel_options_, registry_, space_, handles_[ch.channel_id], clock_);
}

std::vector<std::string> Engine::channel_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, channel] : channels_) out.push_back(id);
  return out;
}

bool Engine::has_channel(const std::string& id) const { return channels_.count(id) > 0; }

Channel& Engine::channel(const std::string& id) {
  auto it = channels_.find(id);
  if (it == channels_.end()) raise(Errc::unknown_channel, "no channel '" + id + "'");
  return *it->second;
}

void Engine::start_all() {
  for (auto& [id, channel] : channels_) channel->start();
}

void Engine::stop_all() {
  for (auto& [id, channel] : channels_) {
    if (channel->state() != ChannelState::stopped) {
      try {
        channel->stop();
      } catch (const Error&) {
      }
    }
  }
}

ChannelStatus Engine::up(const std::string& id) {
  Channel& existing = channel(id);
  if (existing.state() == ChannelState::stopped ||
      existing.state() == ChannelState::failed) {
    // Rebuild on the same lineage; the channel re-boots and generations
    // continue where the archive left off.
    const ChannelConfig* cfg = nullptr;
    for (const auto& ch : config_.channels)
      if (ch.channel_id == id) cfg = &ch;
    handles_[id] = space_.reopen_space(id);
    channels_[id] = std::make_unique<Channel>(*cfg, channel_options_, registry_, space_,
                                              handles_[id], clock_);
  }
  channels_[id]->start();
  return channels_[id]->status();
}

ChannelStatus Engine::down(const std::string& id) {
  Channel& ch = channel(id);
  ch.stop();
  return ch.status();
}

ChannelStatus Engine::status(const std::string& id) { return channel(id).status(); }

}  // namespace de
