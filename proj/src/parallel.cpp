#include "mvfbsde/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>

namespace mvfbsde {

namespace {

std::atomic<std::size_t> g_workers{0}; // 0 = not yet initialized

thread_local bool t_inside_job = false;

// Persistent pool. Each submission owns its state in a shared Job, so a
// worker that wakes late simply drains an already-finished job and sleeps
// again. Chunk boundaries depend only on the worker count, and every loop
// body in the project is exact per index, so results do not depend on
// scheduling. One job at a time; nested calls run serially.
class Pool {
public:
    struct Job {
        std::function<void(std::size_t, std::size_t)> fn;
        std::size_t n = 0;
        std::size_t chunk = 1;
        std::size_t pieces = 0;
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> done{0};
    };

    explicit Pool(std::size_t workers) : workers_(workers) {
        for (std::size_t w = 0; w + 1 < workers_; ++w)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        auto job = std::make_shared<Job>();
        job->fn = fn;
        job->n = n;
        job->chunk = (n + workers_ - 1) / workers_;
        job->pieces = (n + job->chunk - 1) / job->chunk;
        {
            std::lock_guard<std::mutex> lk(mu_);
            current_ = job;
            ++generation_;
        }
        cv_.notify_all();
        work(*job);
        while (job->done.load(std::memory_order_acquire) < job->pieces)
            std::this_thread::yield();
        std::lock_guard<std::mutex> lk(mu_);
        if (current_ == job) current_.reset();
    }

private:
    static void work(Job& job) {
        t_inside_job = true;
        for (;;) {
            const std::size_t begin = job.next.fetch_add(job.chunk, std::memory_order_relaxed);
            if (begin >= job.n) break;
            job.fn(begin, std::min(job.n, begin + job.chunk));
            job.done.fetch_add(1, std::memory_order_release);
        }
        t_inside_job = false;
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk,
                         [this, seen] { return stop_ || (current_ && generation_ != seen); });
                if (stop_) return;
                seen = generation_;
                job = current_;
            }
            if (job) work(*job);
        }
    }

    std::size_t workers_;
    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
    std::shared_ptr<Job> current_;
    std::uint64_t generation_ = 0;
};

Pool& pool() {
    static Pool p(worker_count());
    return p;
}

} // namespace

std::size_t worker_count() {
    std::size_t w = g_workers.load(std::memory_order_relaxed);
    if (w == 0) {
        w = std::max<std::size_t>(1, std::thread::hardware_concurrency());
        w = std::min<std::size_t>(w, 8);
        g_workers.store(w, std::memory_order_relaxed);
    }
    return w;
}

void set_worker_count(std::size_t n) {
    g_workers.store(std::max<std::size_t>(1, n), std::memory_order_relaxed);
}

void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    // Below this size the pool handoff costs more than the loop body.
    if (worker_count() <= 1 || t_inside_job || n < 4096) {
        fn(0, n);
        return;
    }
    pool().run(n, fn);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    auto body = [&fn](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    };
    // Per-index work is assumed heavy here (whole paths), so parallelize
    // even small counts.
    if (worker_count() <= 1 || t_inside_job || n < 2) {
        body(0, n);
        return;
    }
    pool().run(n, body);
}

} // namespace mvfbsde
