//
// Copyright 2026 The dpmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#ifndef DPMF_PIPELINE_HPP_
#define DPMF_PIPELINE_HPP_

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "dpmf/block_io.hpp"

namespace dpmf {

// Blocking FIFO with a fixed capacity. close() wakes everyone; pop() then
// drains what is left and returns nullopt.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  // False when the queue was closed before the item could be enqueued.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Writer role: wakes every `period` completed blocks and runs `write`
// concurrently with the workers.
class PeriodicWriter {
 public:
  PeriodicWriter(std::size_t period, std::function<void(std::size_t)> write)
      : period_(period), write_(std::move(write)) {
    if (period_ > 0 && write_) thread_ = std::thread([this] { loop(); });
  }
  ~PeriodicWriter() {
    try {
      stop();
    } catch (...) {
    }
  }

  void block_done() {
    if (!thread_.joinable()) return;
    std::lock_guard lock(mu_);
    if (++done_ % period_ == 0) {
      ++pending_;
      cv_.notify_one();
    }
  }

  void stop() {
    if (!thread_.joinable()) return;
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      cv_.notify_one();
    }
    thread_.join();
    if (error_) std::rethrow_exception(error_);
  }

  std::size_t writes() const { return writes_; }

 private:
  void loop() {
    std::unique_lock lock(mu_);
    while (true) {
      cv_.wait(lock, [&] { return stopping_ || pending_ > 0; });
      if (pending_ == 0 && stopping_) return;
      --pending_;
      std::size_t done = done_;
      lock.unlock();
      try {
        write_(done);
        ++writes_;
      } catch (...) {
        if (!error_) error_ = std::current_exception();
      }
      lock.lock();
    }
  }

  std::size_t period_;
  std::function<void(std::size_t)> write_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t done_ = 0;
  std::size_t pending_ = 0;
  bool stopping_ = false;
  std::atomic<std::size_t> writes_{0};
  std::exception_ptr error_;
  std::thread thread_;
};

struct PassStats {
  std::size_t blocks = 0;
  std::size_t ratings = 0;
};

// One pass over `source`: a reader thread keeps at most `workers` blocks in
// flight, `workers` threads each take whole blocks and call
// process(block, worker_index). The first exception from any role aborts the
// pass and is rethrown here.
template <BlockSource Source, typename Process>
PassStats run_pass(const Source& source, std::size_t workers, Process&& process,
                   PeriodicWriter* writer = nullptr) {
  if (workers == 0) workers = 1;
  BoundedQueue<std::shared_ptr<const UserBlock>> queue(workers);
  std::mutex error_mu;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!error) error = e;
    }
    queue.close();
  };
  std::atomic<std::size_t> blocks{0}, ratings{0};

  std::thread reader([&] {
    try {
      auto r = source.open();
      while (auto block = r.next())
        if (!queue.push(std::move(block))) break;
      queue.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        while (auto block = queue.pop()) {
          process(**block, w);
          blocks.fetch_add(1, std::memory_order_relaxed);
          ratings.fetch_add((*block)->triples.size(), std::memory_order_relaxed);
          if (writer) writer->block_done();
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }
  reader.join();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return {blocks.load(), ratings.load()};
}

}  // namespace dpmf

#endif  // DPMF_PIPELINE_HPP_
