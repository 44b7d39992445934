const http = require('http');

// Simulates a server with a slow boot phase: nothing listens for the
// first two seconds, so readiness polling has to retry.
setTimeout(() => {
  http
    .createServer((req, res) => {
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end('<!doctype html><html><head><title>Slow</title></head><body><h1>Finally up</h1></body></html>');
    })
    .listen(process.env.PORT || 3000);
}, 2000);
