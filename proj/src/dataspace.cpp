#include "de/dataspace.hpp"

#include <fstream>
#include <mutex>

namespace de {
namespace detail {

struct DataBlock {
  enum class State { open, snapshotted, locked_archived };

  Generation generation = 0;
  State state = State::open;
  std::map<std::string, std::shared_ptr<const DataProduct>> products;
  // Producer of each product recorded during the cycle, for the
  // one-producer-per-name contract.
  std::map<std::string, std::string> cycle_writers;
  TimeMs snapshot_at = 0;
};

class ChannelSpace {
 public:
  std::string id;
  const Clock* clock = nullptr;

  mutable std::mutex mu;
  std::shared_ptr<DataBlock> open;
  bool closed = false;
  std::vector<ArchiveRecord> archive;
  std::deque<PutRecord> journal;
  std::uint64_t put_seq = 0;
  std::ofstream archive_out;

  static constexpr std::size_t kJournalCap = 1000;
};

}  // namespace detail

using detail::ChannelSpace;
using detail::DataBlock;

const char* to_string(CycleOutcomeKind kind) {
  switch (kind) {
    case CycleOutcomeKind::success: return "success";
    case CycleOutcomeKind::transform_error: return "transform_error";
    case CycleOutcomeKind::fact_error: return "fact_error";
    case CycleOutcomeKind::publisher_error: return "publisher_error";
  }
  return "unknown";
}

Value ArchiveRecord::to_json() const {
  Value prods = Value::object();
  for (const auto& [name, product] : products) {
    Value entry;
    entry["value"] = product.value;
    entry["produced_by"] = product.produced_by;
    entry["source_generation"] = product.generation;
    prods[name] = std::move(entry);
  }
  Value line;
  line["generation"] = generation;
  line["channel"] = channel_id;
  line["outcome"] = to_string(outcome);
  line["started_at"] = format_iso8601(started_at);
  line["ended_at"] = format_iso8601(ended_at);
  line["products"] = std::move(prods);
  return line;
}

const std::string& SpaceHandle::channel_id() const {
  static const std::string empty;
  return space_ ? space_->id : empty;
}

const std::string& DataBlockView::channel_id() const {
  static const std::string empty;
  return space_ ? space_->id : empty;
}

Generation DataBlockView::generation() const {
  return block_ ? block_->generation : 0;
}

std::shared_ptr<const DataProduct> DataBlockView::find(const std::string& name) const {
  if (!block_) return nullptr;
  std::lock_guard lock(space_->mu);
  auto it = block_->products.find(name);
  return it == block_->products.end() ? nullptr : it->second;
}

std::map<std::string, std::shared_ptr<const DataProduct>> DataBlockView::products() const {
  if (!block_) return {};
  std::lock_guard lock(space_->mu);
  return block_->products;
}

namespace {

bool valid_channel_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

DataSpace::DataSpace(std::filesystem::path archive_dir, const Clock& clock)
    : archive_dir_(std::move(archive_dir)), clock_(clock) {
  std::filesystem::create_directories(archive_dir_);
}

std::filesystem::path DataSpace::archive_file(const std::string& channel_id) const {
  return archive_dir_ / (channel_id + ".jsonl");
}

SpaceHandle DataSpace::create_space(const std::string& channel_id) {
  if (!valid_channel_name(channel_id))
    raise(Errc::invalid_name, "channel id '" + channel_id + "' is not a valid name");
  std::lock_guard lock(registry_mu_);
  if (spaces_.count(channel_id))
    raise(Errc::duplicate_channel, "channel '" + channel_id + "' already registered");
  auto space = std::make_shared<ChannelSpace>();
  space->id = channel_id;
  space->clock = &clock_;
  space->open = std::make_shared<DataBlock>();
  space->archive_out.open(archive_file(channel_id), std::ios::trunc);
  if (!space->archive_out)
    raise(Errc::io_error, "cannot open archive file " + archive_file(channel_id).string());
  spaces_[channel_id] = space;
  return SpaceHandle(space);
}

void DataSpace::close_space(const SpaceHandle& handle) {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  std::lock_guard lock(handle.space_->mu);
  handle.space_->closed = true;
  handle.space_->archive_out.flush();
}

SpaceHandle DataSpace::reopen_space(const std::string& channel_id) {
  auto space = find_space(channel_id);
  std::lock_guard lock(space->mu);
  space->closed = false;
  return SpaceHandle(space);
}

SpaceHandle DataSpace::handle_of(const std::string& channel_id) const {
  return SpaceHandle(find_space(channel_id));
}

bool DataSpace::has_channel(const std::string& channel_id) const {
  std::lock_guard lock(registry_mu_);
  return spaces_.count(channel_id) > 0;
}

std::shared_ptr<ChannelSpace> DataSpace::find_space(const std::string& channel_id) const {
  std::lock_guard lock(registry_mu_);
  auto it = spaces_.find(channel_id);
  if (it == spaces_.end())
    raise(Errc::unknown_channel, "no channel '" + channel_id + "'");
  return it->second;
}

void DataSpace::put(const SpaceHandle& handle, DataProduct product) {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  if (product.name.empty()) raise(Errc::invalid_name, "product name is empty");
  auto& space = *handle.space_;
  std::lock_guard lock(space.mu);
  if (space.closed)
    raise(Errc::space_closed, "channel '" + space.id + "' was shut down");
  if (product.produced_at == 0) product.produced_at = space.clock->now_ms();
  product.generation = space.open->generation;
  auto shared = std::make_shared<const DataProduct>(std::move(product));
  bool replaced = space.open->products.count(shared->name) > 0;
  space.open->products[shared->name] = shared;
  space.journal.push_back(PutRecord{space.put_seq++, shared->name, shared->value,
                                    shared->produced_by, shared->produced_at, replaced});
  if (space.journal.size() > ChannelSpace::kJournalCap) space.journal.pop_front();
}

std::pair<Generation, DataBlockView> DataSpace::snapshot(const SpaceHandle& handle) {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  auto& space = *handle.space_;
  std::lock_guard lock(space.mu);
  if (space.closed)
    raise(Errc::space_closed, "channel '" + space.id + "' was shut down");
  auto current = space.open;
  current->state = DataBlock::State::snapshotted;
  current->snapshot_at = space.clock->now_ms();
  auto next = std::make_shared<DataBlock>();
  next->generation = current->generation + 1;
  next->products = current->products;  // copy-on-write carry-forward
  space.open = next;
  DataBlockView view;
  view.space_ = handle.space_;
  view.block_ = current;
  return {current->generation, view};
}

void DataSpace::record_cycle_product(const DataBlockView& view, DataProduct product) {
  if (!view.valid()) raise(Errc::unknown_channel, "invalid data block view");
  if (product.name.empty()) raise(Errc::invalid_name, "product name is empty");
  auto& space = *view.space_;
  std::lock_guard lock(space.mu);
  auto& block = *view.block_;
  if (block.state == DataBlock::State::locked_archived)
    raise(Errc::block_locked, "generation " + std::to_string(block.generation) +
                                  " of '" + space.id + "' is locked");
  auto writer = block.cycle_writers.find(product.name);
  if (writer != block.cycle_writers.end())
    raise(Errc::duplicate_producer, "product '" + product.name + "' already written by '" +
                                        writer->second + "' this cycle (attempt by '" +
                                        product.produced_by + "')");
  if (product.produced_at == 0) product.produced_at = space.clock->now_ms();
  product.generation = block.generation;
  const std::string name = product.name;
  block.cycle_writers[name] = product.produced_by;
  block.products[name] = std::make_shared<const DataProduct>(std::move(product));
}

ArchiveRecord DataSpace::lock_and_archive(const DataBlockView& view, CycleOutcomeKind outcome) {
  if (!view.valid()) raise(Errc::unknown_channel, "invalid data block view");
  auto& space = *view.space_;
  std::lock_guard lock(space.mu);
  auto& block = *view.block_;
  if (block.state == DataBlock::State::locked_archived)
    raise(Errc::already_archived, "generation " + std::to_string(block.generation) +
                                      " of '" + space.id + "' already archived");
  block.state = DataBlock::State::locked_archived;
  ArchiveRecord record;
  record.channel_id = space.id;
  record.generation = block.generation;
  record.outcome = outcome;
  record.started_at = block.snapshot_at;
  record.ended_at = space.clock->now_ms();
  for (const auto& [name, product] : block.products) record.products[name] = *product;
  space.archive.push_back(record);
  space.archive_out << record.to_json().dump() << '\n';
  space.archive_out.flush();
  return record;
}

std::vector<std::pair<Generation, Value>> DataSpace::history(
    const SpaceHandle& handle, const std::string& product_name) const {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  auto& space = *handle.space_;
  std::lock_guard lock(space.mu);
  std::vector<std::pair<Generation, Value>> out;
  for (const auto& record : space.archive) {
    auto it = record.products.find(product_name);
    if (it != record.products.end()) out.emplace_back(record.generation, it->second.value);
  }
  return out;
}

std::vector<PutRecord> DataSpace::put_journal(const SpaceHandle& handle) const {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  auto& space = *handle.space_;
  std::lock_guard lock(space.mu);
  return {space.journal.begin(), space.journal.end()};
}

SpaceStats DataSpace::stats(const SpaceHandle& handle) const {
  if (!handle.valid()) raise(Errc::unknown_channel, "invalid space handle");
  auto& space = *handle.space_;
  std::lock_guard lock(space.mu);
  return SpaceStats{space.open->generation, space.open->products.size(),
                    space.archive.size(), space.closed};
}

std::vector<ArchiveRecord> DataSpace::archive_records(const std::string& channel_id) const {
  auto space = find_space(channel_id);
  std::lock_guard lock(space->mu);
  return space->archive;
}

std::shared_ptr<const DataProduct> DataSpace::latest(const std::string& channel_id,
                                                     const std::string& product_name) const {
  auto space = find_space(channel_id);
  std::lock_guard lock(space->mu);
  auto it = space->open->products.find(product_name);
  if (it != space->open->products.end()) return it->second;
  for (auto rec = space->archive.rbegin(); rec != space->archive.rend(); ++rec) {
    auto found = rec->products.find(product_name);
    if (found != rec->products.end())
      return std::make_shared<const DataProduct>(found->second);
  }
  return nullptr;
}

}  // namespace de
