#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"

namespace fmm {

// Tracks how many threads are inside a probed region at once.
class ActivityProbe {
 public:
  void enter() {
    const int now = active_.fetch_add(1, std::memory_order_acq_rel) + 1;
    int seen = high_.load(std::memory_order_relaxed);
    while (now > seen && !high_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
    }
  }
  void exit() { active_.fetch_sub(1, std::memory_order_acq_rel); }
  int active() const { return active_.load(); }
  int high_water() const { return high_.load(); }
  void reset() {
    active_.store(0);
    high_.store(0);
  }

 private:
  std::atomic<int> active_{0};
  std::atomic<int> high_{0};
};

//
// P - 1 background threads plus the thread that calls TaskGroup::wait().
// Waiting threads execute queued tasks instead of blocking, so nested groups
// never need more than P threads.
//
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers) : workers_(std::max<std::size_t>(workers, 1)) {
    for (std::size_t i = 1; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;
  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t workers() const noexcept { return workers_; }

  // Threads executing pool work (tasks, or a caller inside a Participant).
  ActivityProbe& probe() { return probe_; }

  // Marks the calling thread as active for the probe; nests.
  class Participant {
   public:
    explicit Participant(WorkerPool& pool) : pool_(pool) {
      if (depth()++ == 0) pool_.probe_.enter();
    }
    ~Participant() {
      if (--depth() == 0) pool_.probe_.exit();
    }
    Participant(const Participant&) = delete;
    Participant& operator=(const Participant&) = delete;

   private:
    static int& depth() {
      thread_local int d = 0;
      return d;
    }
    WorkerPool& pool_;
  };

  void submit(std::function<void()> task) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

  // Runs one queued task on the calling thread; false if the queue was empty.
  bool run_one() {
    std::function<void()> task;
    {
      std::lock_guard lock(mutex_);
      if (queue_.empty()) return false;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    Participant active(*this);
    task();
    return true;
  }

  // Wakes waiters so they re-check their completion condition.
  void notify() {
    { std::lock_guard lock(mutex_); }
    cv_.notify_all();
  }

  template <typename Pred>
  void wait_until(Pred done) {
    while (!done()) {
      if (run_one()) continue;
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return done() || !queue_.empty() || stopping_; });
    }
  }

 private:
  void worker_loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      Participant active(*this);
      task();
    }
  }

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::deque<std::function<void()>> queue_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
  ActivityProbe probe_;
};

// Tasks submitted to a pool and joined together. The first failure is
// rethrown from wait() as an ExecutionError naming the task.
class TaskGroup {
 public:
  explicit TaskGroup(WorkerPool& pool) : pool_(pool), state_(std::make_shared<State>()) {}
  TaskGroup(const TaskGroup&) = delete;
  TaskGroup& operator=(const TaskGroup&) = delete;
  ~TaskGroup() {
    try {
      pool_.wait_until([&] { return state_->pending.load() == 0; });
    } catch (...) {
    }
  }

  void run(std::function<void()> f, std::size_t task_id) {
    state_->pending.fetch_add(1);
    pool_.submit([state = state_, f = std::move(f), task_id, &pool = pool_] {
      try {
        f();
      } catch (const std::exception& e) {
        state->record(task_id, e);
      } catch (...) {
        state->record(task_id, std::runtime_error("unknown exception"));
      }
      if (state->pending.fetch_sub(1) == 1) pool.notify();
    });
  }

  void wait() {
    pool_.wait_until([&] { return state_->pending.load() == 0; });
    std::lock_guard lock(state_->mutex);
    if (state_->error) {
      auto error = std::move(state_->error);
      state_->error.reset();
      throw *error;
    }
  }

 private:
  struct State {
    std::atomic<std::size_t> pending{0};
    std::mutex mutex;
    std::optional<ExecutionError> error;

    void record(std::size_t task_id, const std::exception& e) {
      std::lock_guard lock(mutex);
      if (error) return;
      if (const auto* inner = dynamic_cast<const ExecutionError*>(&e)) {
        error.emplace(*inner);
      } else {
        error.emplace(task_id, e.what());
      }
    }
  };

  WorkerPool& pool_;
  std::shared_ptr<State> state_;
};

// Static split of [0, n) into at most `workers` contiguous ranges; range 0
// runs on the caller. f(begin, end).
template <typename F>
void parallel_for(WorkerPool* pool, std::size_t n, F&& f) {
  if (n == 0) return;
  const std::size_t parts = pool == nullptr ? 1 : std::min(pool->workers(), n);
  if (parts <= 1) {
    f(std::size_t{0}, n);
    return;
  }
  TaskGroup group(*pool);
  const std::size_t chunk = n / parts, extra = n % parts;
  auto begin_of = [&](std::size_t p) { return p * chunk + std::min(p, extra); };
  for (std::size_t p = 1; p < parts; ++p) {
    group.run([&f, b = begin_of(p), e = begin_of(p + 1)] { f(b, e); }, p);
  }
  {
    WorkerPool::Participant active(*pool);
    f(begin_of(0), begin_of(1));
  }
  group.wait();
}

enum class ExecMode { sequential, dfs, bfs, hybrid };

inline const char* to_string(ExecMode m) {
  switch (m) {
    case ExecMode::sequential:
      return "seq";
    case ExecMode::dfs:
      return "dfs";
    case ExecMode::bfs:
      return "bfs";
    case ExecMode::hybrid:
      return "hybrid";
  }
  return "?";
}

inline std::optional<ExecMode> parse_exec_mode(std::string_view s) {
  if (s == "seq" || s == "sequential") return ExecMode::sequential;
  if (s == "dfs") return ExecMode::dfs;
  if (s == "bfs") return ExecMode::bfs;
  if (s == "hybrid") return ExecMode::hybrid;
  return std::nullopt;
}

//
// Leaves of the depth-L recursion tree are numbered in traversal order
// (r_1, ..., r_L) -> sum r_l R^(L-l). The first bfs_count leaves run as
// independent tasks; the remaining dfs_count leaves run one after another
// with all workers, after every task has finished.
//
struct SchedulePlan {
  ExecMode mode = ExecMode::sequential;
  std::size_t depth = 0;
  std::size_t workers = 1;
  std::size_t rank = 1;
  std::uint64_t leaves = 1;
  std::uint64_t bfs_count = 0;
  std::uint64_t dfs_count = 1;

  bool is_bfs_leaf(std::uint64_t leaf) const { return leaf < bfs_count; }
};

inline std::uint64_t power(std::uint64_t base, std::size_t exp) {
  std::uint64_t out = 1;
  for (std::size_t i = 0; i < exp; ++i) out *= base;
  return out;
}

inline SchedulePlan make_schedule(std::size_t rank, std::size_t depth, std::size_t workers, ExecMode mode) {
  if (workers == 0) throw ContractViolation("make_schedule: at least one worker is required");
  if (rank == 0) throw ContractViolation("make_schedule: rank must be positive");
  if ((mode == ExecMode::bfs || mode == ExecMode::hybrid) && depth == 0) {
    throw ContractViolation(std::string(to_string(mode)) + " scheduling needs at least one recursive step");
  }
  SchedulePlan plan;
  plan.depth = depth;
  plan.workers = workers;
  plan.rank = rank;
  plan.leaves = power(rank, depth);
  plan.mode = workers == 1 ? ExecMode::sequential : mode;
  switch (plan.mode) {
    case ExecMode::sequential:
    case ExecMode::dfs:
      plan.bfs_count = 0;
      break;
    case ExecMode::bfs:
      plan.bfs_count = plan.leaves;
      break;
    case ExecMode::hybrid:
      plan.bfs_count = plan.leaves - plan.leaves % workers;
      break;
  }
  plan.dfs_count = plan.leaves - plan.bfs_count;
  return plan;
}

inline SchedulePlan make_schedule(const FastAlgorithm& alg, std::size_t depth, std::size_t workers, ExecMode mode) {
  return make_schedule(alg.rank, depth, workers, mode);
}

// A leaf closure; `all_workers` is set when it may use the whole pool.
using LeafTask = std::function<void(bool all_workers)>;

//
// Runs one closure per leaf under the schedule: BFS leaves as tasks, then a
// barrier, then DFS leaves in order on the caller with all workers.
//
inline void execute(const SchedulePlan& schedule, WorkerPool* pool, const std::vector<LeafTask>& leaves) {
  if (leaves.size() != schedule.leaves) {
    throw ContractViolation("execute: schedule has " + std::to_string(schedule.leaves) + " leaves, got " +
                            std::to_string(leaves.size()));
  }
  if (schedule.mode == ExecMode::sequential || pool == nullptr) {
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      try {
        leaves[i](false);
      } catch (const ExecutionError&) {
        throw;
      } catch (const std::exception& e) {
        throw ExecutionError(i, e.what());
      }
    }
    return;
  }
  WorkerPool::Participant active(*pool);
  {
    TaskGroup group(*pool);
    for (std::size_t i = 0; i < schedule.bfs_count; ++i) group.run([&leaves, i] { leaves[i](false); }, i);
    group.wait();
  }
  for (std::size_t i = schedule.bfs_count; i < leaves.size(); ++i) {
    try {
      leaves[i](true);
    } catch (const ExecutionError&) {
      throw;
    } catch (const std::exception& e) {
      throw ExecutionError(i, e.what());
    }
  }
}

inline std::size_t default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

}  // namespace fmm
