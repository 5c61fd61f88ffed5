#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "de/errors.hpp"
#include "de/value.hpp"

namespace de {

// Provenance of a product imported from another channel by a source proxy.
struct ProductOrigin {
  std::string channel;
  Generation generation = 0;
};

struct DataProduct {
  std::string name;
  Value value;
  std::string produced_by;
  TimeMs produced_at = 0;
  // Generation the product was written at. Carried-forward products keep
  // their original stamp, so a cycle can tell fresh data from stale.
  Generation generation = 0;
  std::optional<ProductOrigin> origin;
};

enum class CycleOutcomeKind { success, transform_error, fact_error, publisher_error };

const char* to_string(CycleOutcomeKind kind);

struct ArchiveRecord {
  std::string channel_id;
  Generation generation = 0;
  CycleOutcomeKind outcome = CycleOutcomeKind::success;
  TimeMs started_at = 0;
  TimeMs ended_at = 0;
  std::map<std::string, DataProduct> products;

  // One archive line: all keys sorted, byte-stable across runs.
  Value to_json() const;
};

struct PutRecord {
  std::uint64_t seq = 0;
  std::string name;
  Value value;
  std::string produced_by;
  TimeMs at = 0;
  bool replaced = false;
};

struct SpaceStats {
  Generation open_generation = 0;
  std::size_t open_products = 0;
  std::size_t archived_records = 0;
  bool closed = false;
};

namespace detail {
class ChannelSpace;
struct DataBlock;
}  // namespace detail

class SpaceHandle {
 public:
  SpaceHandle() = default;
  const std::string& channel_id() const;
  bool valid() const { return space_ != nullptr; }

 private:
  friend class DataSpace;
  explicit SpaceHandle(std::shared_ptr<detail::ChannelSpace> space)
      : space_(std::move(space)) {}
  std::shared_ptr<detail::ChannelSpace> space_;
};

// The working snapshot (t_curr) of one Decision Cycle. Reads are stable for
// the life of the cycle; Transform and Logic Engine outputs are recorded into
// it until lock_and_archive seals the block.
class DataBlockView {
 public:
  DataBlockView() = default;
  bool valid() const { return block_ != nullptr; }
  const std::string& channel_id() const;
  Generation generation() const;
  std::shared_ptr<const DataProduct> find(const std::string& name) const;
  std::map<std::string, std::shared_ptr<const DataProduct>> products() const;

 private:
  friend class DataSpace;
  std::shared_ptr<detail::ChannelSpace> space_;
  std::shared_ptr<detail::DataBlock> block_;
};

// Time-sensitive knowledge store. One DataBlock lineage per channel: the open
// t_next block receives source puts; snapshot() freezes the state for a cycle
// and opens the next generation; lock_and_archive() seals the cycle's block
// into an append-only JSON-lines archive file.
class DataSpace {
 public:
  DataSpace(std::filesystem::path archive_dir, const Clock& clock);

  SpaceHandle create_space(const std::string& channel_id);
  void close_space(const SpaceHandle& handle);
  // Reopen a previously closed channel, continuing its generation lineage.
  SpaceHandle reopen_space(const std::string& channel_id);
  SpaceHandle handle_of(const std::string& channel_id) const;
  bool has_channel(const std::string& channel_id) const;

  void put(const SpaceHandle& handle, DataProduct product);
  std::pair<Generation, DataBlockView> snapshot(const SpaceHandle& handle);
  void record_cycle_product(const DataBlockView& view, DataProduct product);
  ArchiveRecord lock_and_archive(const DataBlockView& view, CycleOutcomeKind outcome);

  std::vector<std::pair<Generation, Value>> history(const SpaceHandle& handle,
                                                    const std::string& product_name) const;
  std::vector<PutRecord> put_journal(const SpaceHandle& handle) const;
  SpaceStats stats(const SpaceHandle& handle) const;
  std::vector<ArchiveRecord> archive_records(const std::string& channel_id) const;

  // Newest visible value of a product in another channel (current t_next
  // first, then the archives). Used by source proxies.
  std::shared_ptr<const DataProduct> latest(const std::string& channel_id,
                                            const std::string& product_name) const;

  const std::filesystem::path& archive_dir() const { return archive_dir_; }
  std::filesystem::path archive_file(const std::string& channel_id) const;

 private:
  std::shared_ptr<detail::ChannelSpace> find_space(const std::string& channel_id) const;

  std::filesystem::path archive_dir_;
  const Clock& clock_;
  mutable std::mutex registry_mu_;
  std::map<std::string, std::shared_ptr<detail::ChannelSpace>> spaces_;
};

}  // namespace de
