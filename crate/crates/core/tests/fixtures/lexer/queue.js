'use strict';
const { EventEmitter } = require('events');

class TaskQueue extends EventEmitter {
  constructor(limit = 2) {
    super();
    this.limit = limit;
    this.running = 0;
    this.pending = [];
  }

  push(task) {
    this.pending.push(task);
    this.next();
    return this;
  }

  // drain while capacity remains
  next() {
    while (this.running < this.limit && this.pending.length) {
      const job = this.pending.shift();
      this.running++;
      job().finally(() => {
        this.running--;
        this.emit('done', `left: ${this.pending.length}`);
        this.next();
      });
    }
  }
}

const $cache = new Map();
module.exports = { TaskQueue, $cache, re: /a+b/g };
