#include "shardsearch/flat_index.hpp"

#include "binary_io.hpp"

namespace shardsearch {
namespace {

constexpr char kMagic[4] = {'F', 'V', 'I', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

}  // namespace

void persist_dense(const FlatVectorIndex& index, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.put_raw(std::string_view(kMagic, sizeof(kMagic)));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.dim()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(index.size()));
  for (const auto& id : index.ids()) w.put_string(id);
  w.put_array<float>(index.raw());
  const auto crc = detail::crc32_of(std::string_view(w.buffer()).substr(kHeaderBytes));
  w.put<std::uint32_t>(crc);
  detail::write_file(path, w.buffer());
}

FlatVectorIndex load_dense(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < kHeaderBytes + 4) throw Error(Errc::corrupt_file, "file too short");
  if (data.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0) throw Error(Errc::corrupt_file, "bad magic");

  detail::ByteReader r(data);
  r.take(sizeof(kMagic));
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dim == 0) throw Error(Errc::corrupt_file, "zero dim");
  // Each id takes at least its 4-byte length prefix.
  if (count > r.remaining() / 4) throw Error(Errc::corrupt_file, "declared count exceeds file size");

  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(r.get_string());

  const std::uint64_t vector_bytes = count * dim * sizeof(float);
  if (r.remaining() != vector_bytes + 4) {
    throw Error(Errc::corrupt_file, "vector payload is " + std::to_string(r.remaining() - 4) + " bytes, header declares " +
                                        std::to_string(vector_bytes));
  }
  const auto payload = std::string_view(data).substr(kHeaderBytes, data.size() - kHeaderBytes - 4);
  const auto vectors = r.take(vector_bytes);
  if (r.get<std::uint32_t>() != detail::crc32_of(payload)) throw Error(Errc::corrupt_file, "checksum mismatch");

  FlatVectorIndex index(static_cast<Eigen::Index>(dim));
  index.reserve(static_cast<Eigen::Index>(count));
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::memcpy(row.data(), vectors.data() + i * dim * sizeof(float), dim * sizeof(float));
    try {
      index.append(std::move(ids[i]), row);
    } catch (const Error& e) {
      throw Error(Errc::corrupt_file, e.what());
    }
  }
  return index;
}

}  // namespace shardsearch
