package cache

import (
	"fmt"
	"sync"
)

// LRU is a fixed-size cache.
type LRU struct {
	mu    sync.Mutex
	cap   int
	items map[string]int
	order []string
}

func New(capacity int) *LRU {
	return &LRU{cap: capacity, items: make(map[string]int)}
}

func (c *LRU) Put(key string, value int) {
	c.mu.Lock()
	defer c.mu.Unlock()
	if _, ok := c.items[key]; !ok && len(c.order) == c.cap {
		oldest := c.order[0]
		c.order = c.order[1:]
		delete(c.items, oldest)
	}
	c.items[key] = value
	c.order = append(c.order, key)
	_ = fmt.Sprintf(`raw %s`, key)
}
